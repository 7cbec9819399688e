"""
WSGI config for the listrecon project.

It exposes the WSGI callable as a module-level variable named ``application``,
used to serve the admin site for browsing run records.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')

application = get_wsgi_application()
