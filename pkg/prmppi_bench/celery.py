# prmppi_bench/celery.py

import os
from celery import Celery

# Set default Django settings module
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'prmppi_bench.settings.development')

app = Celery('prmppi_bench')

# Load configuration from Django settings with CELERY_ prefix
app.config_from_object('django.conf:settings', namespace='CELERY')

# Auto-discover tasks from all installed apps
app.autodiscover_tasks()

app.conf.timezone = 'UTC'

# Benchmark trials run for minutes; hand them to workers one at a time.
app.conf.worker_prefetch_multiplier = 1
app.conf.task_acks_late = True
