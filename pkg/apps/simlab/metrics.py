"""Tracking error, parameter accuracy and the per-benchmark summary table."""
import logging

import numpy as np
import pandas as pd

from apps.base.exceptions import ContractViolation

logger = logging.getLogger(__name__)


def compute_rmse(trajectory, reference, position_indices=None):
    """Root mean squared Euclidean position error between two aligned trajectories."""
    trajectory = np.atleast_2d(np.asarray(trajectory, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if trajectory.shape != reference.shape:
        raise ContractViolation(
            f'trajectory {trajectory.shape} and reference {reference.shape} are not aligned.'
        )
    if position_indices is not None:
        trajectory = trajectory[:, position_indices]
        reference = reference[:, position_indices]
    squared = np.sum((trajectory - reference) ** 2, axis=-1)
    return float(np.sqrt(np.mean(squared)))


def compute_pa(estimate, true_params):
    """Parameter accuracy in percent: ``100 * max(0, 1 - mean_i |e_i - t_i| / |t_i|)``.

    Components whose true value is zero have no relative error and are left
    out of the mean; with no component left the accuracy is undefined (NaN).
    """
    estimate = np.asarray(estimate, dtype=float).reshape(-1)
    true_params = np.asarray(true_params, dtype=float).reshape(-1)
    if estimate.shape != true_params.shape:
        raise ContractViolation(f'estimate {estimate.shape} and true parameters {true_params.shape} differ.')
    usable = true_params != 0.0
    if not np.all(usable):
        logger.warning('Excluding zero-valued parameter components %s from the accuracy.',
                       np.flatnonzero(~usable).tolist())
    if not np.any(usable):
        return float('nan')
    relative = np.abs(estimate[usable] - true_params[usable]) / np.abs(true_params[usable])
    return float(100.0 * max(0.0, 1.0 - np.mean(relative)))


def mean_std(values):
    """Population mean and standard deviation of the finite entries, or ``None``."""
    series = pd.Series(values, dtype=float)
    series = series[np.isfinite(series)]
    if series.empty:
        return None
    return {'mean': float(series.mean()), 'std': float(series.std(ddof=0))}


def _format(stat, digits):
    return '-' if stat is None else f'{stat["mean"]:.{digits}f} ± {stat["std"]:.{digits}f}'


def summarize_records(records):
    """Reduce trial records into the μ ± σ summary of one benchmark.

    RMSE is the per-trial mean over laps; PA is the accuracy after the last
    lap and is only reported when the variant learns its parameters.
    """
    if not records:
        raise ContractViolation('Cannot summarise an empty benchmark.')
    frame = pd.DataFrame([record.as_dict() for record in records]).sort_values('seed', kind='stable')
    learns = bool(frame['learns'].any())
    successes = int(frame['success'].sum())
    trials = len(frame)

    rmse = mean_std(frame['rmse'])
    pa = mean_std([trace[-1] if trace else np.nan for trace in frame['pa_trace']]) if learns else None

    laps = []
    lap_count = max(len(trace) for trace in frame['lap_rmse'])
    for lap in range(lap_count):
        lap_rmse = mean_std([trace[lap] if len(trace) > lap else np.nan for trace in frame['lap_rmse']])
        entry = {'lap': lap + 1, 'rmse': lap_rmse}
        if learns:
            entry['pa'] = mean_std([trace[lap] if trace and len(trace) > lap else np.nan for trace in frame['pa_trace']])
        laps.append(entry)

    table = {'RMSE': _format(rmse, 3), 'SR': f'{successes}/{trials}'}
    if learns:
        table['PA (%)'] = _format(pa, 2)

    summary = {
        'environment': frame['environment'].iloc[0],
        'variant': frame['variant'].iloc[0],
        'trials': trials,
        'seeds': [int(seed) for seed in frame['seed']],
        'rmse': rmse,
        'success': {'successes': successes, 'trials': trials},
        'laps': laps,
        'violations': int(frame['violations'].sum()),
        'fallbacks': int(sum(counts.get('robust', 0) for counts in frame['branch_counts'])),
        'failed_trials': int((frame['status'] == 'failed').sum()),
        'table': table,
    }
    if learns:
        summary['pa'] = pa
    return summary
