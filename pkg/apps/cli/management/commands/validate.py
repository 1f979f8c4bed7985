import json

from django.core.management.base import BaseCommand

from apps.cli.config import add_run_arguments
from apps.cli.utils import validated_serializer


class Command(BaseCommand):
    help = 'Parse and validate a run configuration without running it'

    def add_arguments(self, parser):
        add_run_arguments(parser)

    def handle(self, *args, **options):
        serializer = validated_serializer(options)
        spec = serializer.to_spec()
        self.stdout.write(json.dumps({
            'environment': spec.environment,
            'variant': spec.variant,
            'trials': spec.trials,
            'seeds': [spec.seeds[0], spec.seeds[-1]],
            'controller': spec.controller_overrides,
            'belief': spec.belief_overrides,
            'environment_overrides': spec.environment_overrides,
        }, indent=2, sort_keys=True))
        self.stdout.write(self.style.SUCCESS('Configuration is valid'))
