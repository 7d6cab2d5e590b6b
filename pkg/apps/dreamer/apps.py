from django.apps import AppConfig


class DreamerConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.dreamer'
