from django.apps import AppConfig


class PrmppiConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.prmppi'
