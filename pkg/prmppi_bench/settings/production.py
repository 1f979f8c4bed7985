"""
Production settings for the prmppi_bench project.

- Activate by setting `DJANGO_SETTINGS_MODULE=prmppi_bench.settings.production`
  on the benchmark hosts.
- Trials are dispatched to Celery workers through the Redis broker unless
  PRMPPI_TRIAL_BACKEND says otherwise.
"""
from .base import *
import os
from dotenv import load_dotenv

load_dotenv()

DEBUG = False

CELERY_TASK_ALWAYS_EAGER = os.getenv('CELERY_TASK_ALWAYS_EAGER', 'False') == 'True'

PRMPPI_TRIAL_BACKEND = os.getenv('PRMPPI_TRIAL_BACKEND', 'celery')
