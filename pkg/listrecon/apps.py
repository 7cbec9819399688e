from django.apps import AppConfig
from django.conf import settings


class ListreconConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'listrecon'
    verbose_name = 'List-mode reconstruction'

    def ready(self):
        from .projector import set_threads

        set_threads(settings.LISTRECON.get('THREADS'))
