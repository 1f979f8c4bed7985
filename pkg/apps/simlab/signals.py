import logging

from django.dispatch import Signal, receiver

logger = logging.getLogger(__name__)

# Sent by run_episode at the end of every lap with environment, variant, seed,
# lap, rmse, pa, violations and fallbacks.
lap_completed = Signal()

# Sent by run_episode once per trial with the finished TrialRecord as ``record``.
episode_finished = Signal()


@receiver(lap_completed)
def log_lap_summary(sender, environment, variant, seed, lap, rmse, pa, violations, fallbacks, **kwargs):
    """Per-lap summaries are always logged, whatever the step logging setting."""
    logger.info(
        '%s/%s seed %d lap %d: rmse=%.4f pa=%s violations=%d fallbacks=%d',
        environment, variant, seed, lap, rmse, '-' if pa is None else f'{pa:.2f}', violations, fallbacks,
    )


@receiver(episode_finished)
def log_episode_outcome(sender, record, **kwargs):
    if record.status == 'failed':
        logger.warning('%s/%s seed %d failed: %s', record.environment, record.variant, record.seed, record.error)
    elif record.status == 'diverged':
        logger.warning('%s/%s seed %d diverged after %d steps', record.environment, record.variant,
                       record.seed, record.steps)
    else:
        logger.info('%s/%s seed %d finished: success=%s rmse=%.4f', record.environment, record.variant,
                    record.seed, record.success, record.rmse)
