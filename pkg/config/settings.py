"""
Django settings for the listrecon project.

Generated by 'django-admin startproject' using Django 4.2.28 and trimmed down to
what the reconstruction toolkit needs: the run-record models, the admin site to
browse them, and the LISTRECON block of numerical defaults.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables from .env files (e.g. .env.local)
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-listrecon-local-only')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv('DJANGO_DEBUG', 'True').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',

    "listrecon",
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'config.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'config.wsgi.application'


# Database
# Run records only; sqlite is enough for a single-process toolkit.

DATABASES = {
    "default": {
        "ENGINE": os.getenv("DB_ENGINE", "django.db.backends.sqlite3"),
        "NAME": os.getenv("DB_NAME", str(BASE_DIR / "db.sqlite3")),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (admin only)

STATIC_URL = 'static/'
STATIC_ROOT = os.path.join(BASE_DIR, 'staticfiles')

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'listrecon': {
            'handlers': ['console'],
            'level': os.getenv('LISTRECON_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Reconstruction toolkit defaults
# Every entry can be overridden from the environment or a .env file.

LISTRECON = {
    # Worker threads for the projector kernels (0 = numba default)
    'THREADS': int(os.getenv('LISTRECON_THREADS', '0')),
    # Fixed number of event chunks per projection call; independent of THREADS
    # so that reductions are identical for any thread count
    'PROJECTOR_CHUNKS': int(os.getenv('LISTRECON_PROJECTOR_CHUNKS', '64')),
    # TOF weights below this value are dropped from a system-matrix row
    'TOF_WEIGHT_CUTOFF': float(os.getenv('LISTRECON_TOF_WEIGHT_CUTOFF', '1e-6')),
    # Scanner ring radius in mm when a run config does not give one
    'RING_RADIUS': float(os.getenv('LISTRECON_RING_RADIUS', '350.0')),
    # Diameter (mm) of the circular field of view the TOF bins must cover
    'FOV_DIAMETER': float(os.getenv('LISTRECON_FOV_DIAMETER', '255.0')),
    'OUTPUT_DIR': os.getenv('LISTRECON_OUTPUT_DIR', str(BASE_DIR / 'runs')),
    'RUN_SLOW_TESTS': os.getenv('LISTRECON_RUN_SLOW_TESTS', 'False').lower() == 'true',
}
