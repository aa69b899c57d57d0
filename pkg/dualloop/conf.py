"""
App settings: ``settings.DUALLOOP`` merged over the defaults below.
"""

from pathlib import Path

from django.conf import settings

APP_DIR = Path(__file__).resolve().parent

DEFAULTS = {
    "LLM_BASE_URL": "",
    "LLM_TOKEN": "",
    "LLM_MODEL": "glm-4-0520",
    "LLM_TIMEOUT_S": 60,
    "LLM_MAX_RETRIES": 2,
    "LLM_BACKOFF_S": 1.0,
    "LLM_MAX_CONCURRENCY": 4,
    "LLM_MAX_TOKENS": 4095,
    "LLM_TEMPERATURE": 0.0,
    "LLM_REPLAY_LOG": "var/llm_replay.jsonl",
    "DATA_DIR": str(APP_DIR / "data"),
    "MEMORY_DIR": "var/memory",
    "MAX_ROUNDS": 4,
    "MAX_REPLANS": 2,
    "REACT_STEPS": 12,
    "FEW_SHOT_K": 3,
}


def get_setting(name):
    overrides = getattr(settings, "DUALLOOP", {}) or {}
    if name in overrides:
        return overrides[name]
    try:
        return DEFAULTS[name]
    except KeyError:
        raise KeyError(f"Unknown dualloop setting: {name}") from None


def data_path(filename) -> Path:
    return Path(get_setting("DATA_DIR")) / filename
