"""
Pytest wiring for the Django test suite: configure settings and set up the
test environment and databases the way ``manage.py test`` does.
"""

import os

import django


def pytest_configure(config):
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
    django.setup()

    from django.test.utils import get_runner
    from django.conf import settings

    runner = get_runner(settings)(interactive=False, verbosity=0)
    runner.setup_test_environment()
    config._django_runner = runner
    config._django_db_config = runner.setup_databases()


def pytest_unconfigure(config):
    runner = getattr(config, "_django_runner", None)
    if runner is None:
        return
    runner.teardown_databases(config._django_db_config)
    runner.teardown_test_environment()
