"""
URL configuration for the listrecon project.

Only the admin site is exposed; it is used to browse simulation, reconstruction
and training run records.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
