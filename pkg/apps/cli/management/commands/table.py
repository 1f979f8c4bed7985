import json
from pathlib import Path

import pandas as pd
from django.core.management.base import BaseCommand, CommandError

COLUMNS = ['environment', 'variant', 'trials', 'RMSE', 'SR', 'PA (%)']


def collect_rows(results_dir):
    """One row per summary.json found under ``results_dir``, sorted by environment and variant."""
    rows = []
    for path in sorted(Path(results_dir).rglob('summary.json')):
        summary = json.loads(path.read_text(encoding='utf-8'))
        row = {
            'environment': summary['environment'],
            'variant': summary['variant'],
            'trials': summary['trials'],
        }
        row.update(summary['table'])
        rows.append(row)
    frame = pd.DataFrame(rows, columns=COLUMNS).fillna('-')
    return frame.sort_values(['environment', 'variant'], kind='stable')


class Command(BaseCommand):
    help = 'Render the mean ± std comparison table from stored benchmark summaries'

    def add_arguments(self, parser):
        parser.add_argument(
            'results_dir',
            help='Directory searched recursively for summary.json files',
        )

    def handle(self, *args, **options):
        results_dir = Path(options['results_dir'])
        if not results_dir.is_dir():
            raise CommandError(f'{results_dir} is not a directory')
        frame = collect_rows(results_dir)
        if frame.empty:
            raise CommandError(f'No summary.json found under {results_dir}')
        self.stdout.write(frame.to_string(index=False))
