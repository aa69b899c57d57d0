"""
Test settings: SQLite database, no replay log, quiet bench logger
"""

from .settings import *

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db_test.sqlite3",
    }
}

DUALLOOP = {
    **DUALLOOP,
    "LLM_BASE_URL": "http://llm.test/v1",
    "LLM_TOKEN": "test-token",
    "LLM_REPLAY_LOG": "",
    "LLM_BACKOFF_S": 0.0,
    "MEMORY_DIR": "",
}

LOGGING["loggers"]["dualloop"]["level"] = "WARNING"
