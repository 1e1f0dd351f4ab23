"""
Shared plumbing for the experiment subcommands.

Exit codes: 0 on success, 2 for config or input errors, 1 for runtime errors.
"""
import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from ..serializers import flatten_errors
from ..utils import write_resolved_config

logger = logging.getLogger(__name__)

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    """Unreadable or invalid experiment config."""


class ExperimentCommand(BaseCommand):
    """Base class: --config/--out/--threads/--seed handling and error mapping."""
    config_serializer_class = None

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Path to the JSON experiment config')
        parser.add_argument('--out', help='Output directory (overrides output_dir)')
        parser.add_argument('--threads', type=int, help='Cap on worker threads')
        parser.add_argument('--seed', type=int, help='Base seed (overrides base_seed)')

    def load_config(self, options) -> dict:
        path = Path(options['config'])
        try:
            raw = json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")

        if isinstance(raw, dict) and options.get('seed') is not None:
            raw['base_seed'] = options['seed']
        serializer = self.config_serializer_class(data=raw)
        if not serializer.is_valid():
            raise ConfigError('invalid config:\n' + '\n'.join(flatten_errors(serializer.errors)))
        return serializer.validated_data

    def output_dir(self, options, config) -> Path:
        out = options.get('out') or config.get('output_dir')
        if not out:
            out = Path(settings.IMPACTLAB['OUTPUT_DIR']) / self.command_name()
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def handle(self, *args, **options):
        try:
            config = self.load_config(options)
            threads = options.get('threads')
            if threads is None:
                threads = settings.IMPACTLAB['THREADS']
            if threads < 1:
                raise ConfigError(f"--threads must be at least 1, got {threads}")
            out_dir = self.output_dir(options, config)
            write_resolved_config(out_dir, self.command_name(), config, threads)
            self.run(config, out_dir, threads)
        except CommandError:
            raise
        except (ValueError, serializers.ValidationError) as e:
            raise CommandError(str(e), returncode=EXIT_CONFIG)
        except Exception as e:
            logger.exception(f"{self.command_name()} failed")
            raise CommandError(f"{type(e).__name__}: {e}", returncode=EXIT_RUNTIME)

    def run(self, config, out_dir: Path, threads: int):
        raise NotImplementedError
