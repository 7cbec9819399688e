"""
Shared plumbing for the toolkit's management commands.
"""

import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from listrecon.exceptions import (
    EmptyDataError,
    FileFormatError,
    HashMismatchError,
    InvalidConfigError,
    ListreconError,
)
from listrecon.pipeline import pipeline

logger = logging.getLogger(__name__)

# process exit codes
EXIT_CONFIG = 2
EXIT_FILE = 3
EXIT_HASH = 4


def exit_code_for(error: Exception) -> int:
    if isinstance(error, HashMismatchError):
        return EXIT_HASH
    if isinstance(error, (FileFormatError, OSError)):
        return EXIT_FILE
    if isinstance(error, (InvalidConfigError, EmptyDataError)):
        return EXIT_CONFIG
    return 1


class ToolkitCommand(BaseCommand):
    """Adds --config/--seed/--threads/--out and turns toolkit errors into exit codes."""

    config_required = False
    default_out = ''

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            type=str,
            required=self.config_required,
            default=None,
            help='Run-config file (key = value lines)',
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Override the seed from the config file',
        )
        parser.add_argument(
            '--threads',
            type=int,
            default=None,
            help='Projector worker threads (default: LISTRECON_THREADS or all cores)',
        )
        parser.add_argument(
            '--out',
            type=str,
            default=None,
            help='Output path',
        )

    def output_path(self, options) -> Path:
        if options['out']:
            return Path(options['out'])
        return Path(settings.LISTRECON['OUTPUT_DIR']) / self.default_out

    def handle(self, *args, **options):
        self.record = None
        try:
            threads = pipeline.set_threads(options['threads'])
            self.run(threads, **options)
        except (ListreconError, OSError) as e:
            self.mark_failed(e)
            code = exit_code_for(e)
            logger.error(f"{self.name} failed: {e}", exc_info=True)
            self.stdout.write(self.style.ERROR(f"❌ Error: {e}"))
            raise CommandError(str(e), returncode=code) from e
        except Exception as e:
            self.mark_failed(e)
            logger.exception(f"{self.name} failed unexpectedly: {e}")
            self.stdout.write(self.style.ERROR(f"❌ Unexpected error: {e}"))
            raise

    @property
    def name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def run(self, threads, /, **options):
        raise NotImplementedError

    def mark_failed(self, error):
        if self.record is not None:
            self.record.status = 'failed'
            self.record.error_message = str(error)
            self.record.save()

    def mark_success(self, **fields):
        for key, value in fields.items():
            setattr(self.record, key, value)
        self.record.status = 'success'
        self.record.save()
