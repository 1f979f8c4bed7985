from django.apps import AppConfig


class BeliefConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.belief'
