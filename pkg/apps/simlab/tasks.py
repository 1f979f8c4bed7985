from celery import shared_task

from .services import BenchmarkSpec, execute_trial


@shared_task
def run_trial(environment, variant, seed, options=None):
    """
    Run one benchmark trial on a Celery worker.
    Returns the JSON payload of the TrialResult so it survives the result backend.
    """
    spec = BenchmarkSpec(environment, variant, trials=1, base_seed=seed, **(options or {}))
    return execute_trial(spec, seed).as_payload()
