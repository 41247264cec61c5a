"""
Django settings for BohmLab project.

BohmLab carries no web surface: Django is used for its management commands
(`python manage.py bohm ...`), its test runner and the run log kept in sqlite.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# ADD BOHM.ENV
import os
from os.path import join, dirname
from dotenv import load_dotenv

dotenv_path = join(dirname(__file__), 'bohm.env')
load_dotenv(dotenv_path)


SECRET_KEY = os.getenv('SECRET_KEY', 'bohmlab-local-only')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'Trajectories',
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DB_PATH = os.getenv('BOHM_DB_PATH', str(BASE_DIR / 'db.sqlite3'))

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': DB_PATH,
    }
}


# Run outputs and worker threads. These two are the only knobs a run
# configuration takes from the environment.

BOHM_OUT_DIR = os.getenv('BOHM_OUT_DIR', str(BASE_DIR / 'runs'))

BOHM_THREADS = int(os.getenv('BOHM_THREADS', '1'))

# Multi-minute figure reproductions only run when this is set.
BOHM_SLOW_TESTS = os.getenv('BOHM_SLOW_TESTS', '0').lower() in ('1', 'true', 'yes')


# Logging

BOHM_LOG_LEVEL = os.getenv('BOHM_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(module)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': BOHM_LOG_LEVEL,
    },
}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
