"""
Development settings for the prmppi_bench project.

- Trials run eagerly in-process (no broker needed).
- The apps logger reports per-lap summaries at INFO.

Note that Django will use the values in this file AND values from
settings/base.py
"""
from .base import *
from dotenv import load_dotenv
import os

load_dotenv()

DEBUG = os.getenv('DEBUG', 'True') == 'True'

SETTINGS_MODULE = 'prmppi_bench.settings.development'

CELERY_TASK_ALWAYS_EAGER = True

# Logging
LOGGING['loggers']['apps']['level'] = 'INFO'
