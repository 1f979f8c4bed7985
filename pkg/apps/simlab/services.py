import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import django
import pandas as pd
from django.apps import apps as app_registry
from django.conf import settings

from apps.base.utils.io import atomic_write_frame, atomic_write_json

from .environments import make_environment
from .episode import TrialRecord, TrialResult, run_episode
from .metrics import summarize_records
from .variants import get_variant

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchmarkSpec:
    """Everything a worker needs to rebuild and run one trial."""

    environment: str
    variant: str
    trials: int = 1
    base_seed: int = 0
    environment_overrides: dict = field(default_factory=dict)
    controller_overrides: dict = field(default_factory=dict)
    belief_overrides: dict = field(default_factory=dict)
    log_steps: bool = False

    @property
    def seeds(self):
        return [self.base_seed + i for i in range(self.trials)]


@dataclass
class BenchmarkResult:
    spec: BenchmarkSpec
    results: list

    @property
    def records(self):
        return [result.record for result in self.results]

    def summary(self):
        summary = summarize_records(self.records)
        summary['controller_overrides'] = self.spec.controller_overrides
        summary['environment_overrides'] = self.spec.environment_overrides
        summary['belief_overrides'] = self.spec.belief_overrides
        return summary

    def timings(self):
        return {str(record.seed): record.step_times for record in self.records}


def execute_trial(spec, seed):
    """Run one trial of ``spec``; any error becomes a failed record instead of propagating."""
    try:
        environment = make_environment(spec.environment, spec.environment_overrides)
        return run_episode(environment, spec.variant, seed, spec.controller_overrides, spec.belief_overrides,
                           log_steps=spec.log_steps)
    except Exception as exc:
        logger.exception('Trial %s/%s seed %d failed', spec.environment, spec.variant, seed)
        return TrialResult(TrialRecord.failed(spec.environment, spec.variant, seed, exc), pd.DataFrame(), [])


def _initialise_worker():
    if not app_registry.ready:
        django.setup()


class BenchmarkService:
    """Runs and stores benchmark batches."""

    @staticmethod
    def run_benchmark(spec, workers=None, backend=None):
        """
        Run every trial of ``spec`` and collect the results in seed order.

        Args:
            spec: BenchmarkSpec describing environment, variant, trials and seeds
            workers: process pool size; defaults to the available cores,
                ``1`` runs the trials in this process
            backend: 'process' or 'celery'; defaults to
                ``settings.PRMPPI_TRIAL_BACKEND``

        Returns:
            BenchmarkResult instance

        Raises:
            ConfigurationError: if the environment or variant cannot be built
        """
        # Fail fast on configuration errors before anything is scheduled.
        make_environment(spec.environment, spec.environment_overrides)
        get_variant(spec.variant)
        backend = backend or settings.PRMPPI_TRIAL_BACKEND
        workers = workers or os.cpu_count() or 1

        if backend == 'celery':
            results = BenchmarkService._run_with_celery(spec)
        elif workers == 1 or spec.trials == 1:
            results = [execute_trial(spec, seed) for seed in spec.seeds]
        else:
            with ProcessPoolExecutor(max_workers=min(workers, spec.trials), initializer=_initialise_worker) as pool:
                results = list(pool.map(execute_trial, [spec] * spec.trials, spec.seeds))

        failed = sum(result.record.status == 'failed' for result in results)
        if failed:
            logger.warning('%d of %d trials of %s/%s failed', failed, len(results), spec.environment, spec.variant)
        return BenchmarkResult(spec, results)

    @staticmethod
    def _run_with_celery(spec):
        from celery import group

        from .tasks import run_trial

        options = {
            'environment_overrides': spec.environment_overrides,
            'controller_overrides': spec.controller_overrides,
            'belief_overrides': spec.belief_overrides,
            'log_steps': spec.log_steps,
        }
        job = group(run_trial.s(spec.environment, spec.variant, seed, options) for seed in spec.seeds)
        payloads = job.apply_async().get(disable_sync_subtasks=False)
        return [TrialResult.from_payload(payload) for payload in payloads]

    @staticmethod
    def write_outputs(result, output_dir):
        """
        Write summary.json, timings.json and the per-trial CSVs under ``output_dir``.

        Every file except timings.json is a function of the configuration
        and the seeds only.

        Returns:
            Path of the written summary
        """
        output_dir = Path(output_dir)
        for trial in result.results:
            seed = trial.record.seed
            if not trial.steps.empty:
                atomic_write_frame(output_dir / f'trial_{seed}.csv', trial.steps)
            for lap, frame in enumerate(trial.beliefs):
                atomic_write_frame(output_dir / f'belief_{seed}_lap{lap}.csv', frame)
        atomic_write_json(output_dir / 'records.json', [
            {key: value for key, value in record.as_dict().items() if key != 'step_times'}
            for record in result.records
        ])
        atomic_write_json(output_dir / 'timings.json', result.timings())
        return atomic_write_json(output_dir / 'summary.json', result.summary())
