"""
Django settings for the impactlab project.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env file (explicitly from project root)
env_path = BASE_DIR / '.env'
load_dotenv(env_path)


DEBUG = os.getenv('DEBUG', 'False') == 'True'

# Nothing is signed or served; Django only needs a non-empty value.
SECRET_KEY = os.getenv('SECRET_KEY', 'impactlab-batch-toolkit')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Third party apps
    'rest_framework',
    # Local apps
    'impact',
    'arbitrage',
    'estimation',
]

# Batch toolkit: no ORM models, no database.
DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'


# Django REST Framework settings (serializers validate experiment configs)
REST_FRAMEWORK = {
    'NON_FIELD_ERRORS_KEY': 'config',
    # lets DRF run without django.contrib.auth
    'UNAUTHENTICATED_USER': None,
}


# Toolkit settings
IMPACTLAB = {
    'THREADS': int(os.getenv('IMPACTLAB_THREADS', '1')),
    'OUTPUT_DIR': os.getenv('IMPACTLAB_OUTPUT_DIR', 'runs'),
    'CHUNK_SIZE': int(os.getenv('IMPACTLAB_CHUNK_SIZE', '2048')),
    'SCHEMA_VERSION': 1,
}


# Logging: everything goes to standard error so CSV output stays clean.
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
            'stream': 'ext://sys.stderr',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.getenv('IMPACTLAB_LOG_LEVEL', 'INFO'),
    },
}
