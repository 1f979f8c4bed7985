from django.apps import AppConfig


class SimlabConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.simlab'
    verbose_name = 'Simulation Benchmarks'

    def ready(self):
        import apps.simlab.signals
