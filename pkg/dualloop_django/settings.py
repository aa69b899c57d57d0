"""
Django settings for the dual-loop agent bench.
Experiment runs are stored in SQLite unless DB_ENGINE says otherwise.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config("SECRET_KEY", default="dev-secret-key-change-in-production")

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config("DEBUG", default=True, cast=bool)

ALLOWED_HOSTS = ["localhost", "127.0.0.1", "0.0.0.0"]


# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "rest_framework",
    "dualloop",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "dualloop_django.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.debug",
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "dualloop_django.wsgi.application"


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    "default": {
        "ENGINE": config("DB_ENGINE", default="django.db.backends.sqlite3"),
        "NAME": config("DB_NAME", default=str(BASE_DIR / "db.sqlite3")),
        "USER": config("DB_USER", default=""),
        "PASSWORD": config("DB_PASSWORD", default=""),
        "HOST": config("DB_HOST", default=""),
        "PORT": config("DB_PORT", default=""),
    }
}


# Password validation
# https://docs.djangoproject.com/en/4.2/ref/settings/#auth-password-validators

AUTH_PASSWORD_VALIDATORS = [
    {
        "NAME": "django.contrib.auth.password_validation.UserAttributeSimilarityValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.MinimumLengthValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.CommonPasswordValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.NumericPasswordValidator",
    },
]


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


STATIC_URL = "static/"
STATIC_ROOT = BASE_DIR / "staticfiles"

# REST Framework Configuration
REST_FRAMEWORK = {
    "DEFAULT_PERMISSION_CLASSES": [
        "rest_framework.permissions.AllowAny",
    ],
    "DEFAULT_AUTHENTICATION_CLASSES": [
        "rest_framework.authentication.SessionAuthentication",
        "rest_framework.authentication.BasicAuthentication",
    ],
    "DEFAULT_RENDERER_CLASSES": [
        "rest_framework.renderers.JSONRenderer",
    ],
    "DEFAULT_PAGINATION_CLASS": "rest_framework.pagination.PageNumberPagination",
    "PAGE_SIZE": 20,
}

# Agent bench configuration (see dualloop/conf.py for the defaults)
DUALLOOP = {
    "LLM_BASE_URL": config("DUALLOOP_LLM_BASE_URL", default=""),
    "LLM_TOKEN": config("DUALLOOP_LLM_TOKEN", default=""),
    "LLM_MODEL": config("DUALLOOP_LLM_MODEL", default="glm-4-0520"),
    "LLM_TIMEOUT_S": config("DUALLOOP_LLM_TIMEOUT_S", default=60, cast=float),
    "LLM_MAX_RETRIES": config("DUALLOOP_LLM_MAX_RETRIES", default=2, cast=int),
    "LLM_BACKOFF_S": config("DUALLOOP_LLM_BACKOFF_S", default=1.0, cast=float),
    "LLM_MAX_CONCURRENCY": config("DUALLOOP_LLM_MAX_CONCURRENCY", default=4, cast=int),
    "LLM_REPLAY_LOG": config("DUALLOOP_LLM_REPLAY_LOG", default=str(BASE_DIR / "var" / "llm_replay.jsonl")),
    "DATA_DIR": config("DUALLOOP_DATA_DIR", default=str(BASE_DIR / "dualloop" / "data")),
    "MEMORY_DIR": config("DUALLOOP_MEMORY_DIR", default=str(BASE_DIR / "var" / "memory")),
    "MAX_ROUNDS": config("DUALLOOP_MAX_ROUNDS", default=4, cast=int),
    "MAX_REPLANS": config("DUALLOOP_MAX_REPLANS", default=2, cast=int),
    "REACT_STEPS": config("DUALLOOP_REACT_STEPS", default=12, cast=int),
    "FEW_SHOT_K": config("DUALLOOP_FEW_SHOT_K", default=3, cast=int),
}

# Logging Configuration
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "INFO",
        },
        "dualloop": {
            "handlers": ["console"],
            "level": config("DUALLOOP_LOG_LEVEL", default="INFO"),
        },
    },
}

# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
