from django.apps import AppConfig


class DualLoopConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "dualloop"
    verbose_name = "Dual-loop agent bench"
