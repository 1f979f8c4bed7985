import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'prmppi_bench.settings.development')
django.setup()
