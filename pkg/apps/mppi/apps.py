from django.apps import AppConfig


class MppiConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.mppi'
