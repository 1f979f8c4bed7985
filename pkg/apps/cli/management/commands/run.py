from django.core.management.base import BaseCommand

from apps.cli.config import add_run_arguments
from apps.cli.utils import command_error, validated_serializer
from apps.simlab.services import BenchmarkService


class Command(BaseCommand):
    help = 'Run a benchmark batch and write summary.json and the per-trial CSVs'

    def add_arguments(self, parser):
        add_run_arguments(parser)

    def handle(self, *args, **options):
        serializer = validated_serializer(options)
        spec = serializer.to_spec()
        output_dir = serializer.output_dir()

        self.stdout.write(self.style.WARNING('=' * 60))
        self.stdout.write(self.style.WARNING(
            f'{spec.environment} / {spec.variant}: {spec.trials} trials from seed {spec.base_seed}'
        ))
        self.stdout.write(self.style.WARNING('=' * 60))

        result = BenchmarkService.run_benchmark(spec, workers=serializer.validated_data.get('workers'))
        try:
            summary_path = BenchmarkService.write_outputs(result, output_dir)
        except OSError as exc:
            raise command_error(exc) from exc

        # Failed trials are data; only configuration and I/O errors change the exit code.
        summary = result.summary()
        for column, value in summary['table'].items():
            self.stdout.write(f'  {column}: {value}')
        if summary['failed_trials']:
            self.stdout.write(self.style.NOTICE(f'  {summary["failed_trials"]} trial(s) failed'))
        self.stdout.write(self.style.SUCCESS(f'\nWrote {summary_path}'))
