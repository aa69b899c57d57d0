"""
URL configuration for the dualloop app
"""

from django.urls import include, path
from rest_framework.routers import DefaultRouter

from . import views

router = DefaultRouter()
router.register(r"runs", views.ExperimentRunViewSet, basename="run")

app_name = "dualloop"

urlpatterns = [
    path("api/v1/", include(router.urls)),
]
