"""Conformal certification of joint chance constraints over a horizon.

For P trajectories rolled out under i.i.d. parameter samples, the
non-conformity score of a trajectory is ``rho = -min_k h(x_k)``. With the
scores sorted ascending and ``r = ceil((P + 1)(1 - delta))``, the true
trajectory satisfies ``rho <= rho_(r)`` with probability at least
``1 - delta``. The robustness ``R = -rho_(r)`` certifies the whole horizon
as safe when it is positive.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from apps.base.exceptions import InsufficientSamples
from apps.base.utils.validators import validate_count, validate_probability

logger = logging.getLogger(__name__)

# (P + 1)(1 - delta) is rounded before the ceiling so 11 * 0.9 gives 10, not 11.
RANK_DECIMALS = 9


def _ceil(value):
    return int(math.ceil(round(value, RANK_DECIMALS)))


def minimum_samples(delta):
    """Smallest P with a finite conformal quantile: ``ceil((1 - delta) / delta)``."""
    validate_probability(delta)
    return _ceil((1.0 - delta) / delta)


def default_samples(delta):
    """Default sample count ``ceil(1 / delta)``: 10 for 0.1, 20 for 0.05."""
    validate_probability(delta)
    return _ceil(1.0 / delta)


def conformal_rank(samples, delta):
    """1-indexed rank of the order statistic used as the conformal quantile.

    Raises:
        InsufficientSamples: if ``ceil((P + 1)(1 - delta)) > P``.
    """
    samples = validate_count(samples, 'samples')
    validate_probability(delta)
    rank = _ceil((samples + 1) * (1.0 - delta))
    if rank > samples:
        raise InsufficientSamples(samples, delta, rank, minimum_samples(delta))
    return rank


@dataclass(frozen=True)
class SafetyVerdict:
    robustness: float
    rank: int
    scores: np.ndarray
    delta: float

    @property
    def certified(self):
        return self.robustness > 0.0


def nonconformity(trajectory, safe_set, params=None):
    """``-min_k h(x_k)`` over the last-but-one axis, x_0 included.

    ``trajectory`` is ``(..., N + 1, n_x)``. Trajectories containing a
    non-finite state score ``+inf``.
    """
    trajectory = np.asarray(trajectory, dtype=float)
    with np.errstate(invalid='ignore', over='ignore'):
        margins = safe_set.margin(trajectory, params)
    finite = np.all(np.isfinite(trajectory), axis=-1) & np.isfinite(margins)
    margins = np.where(finite, margins, -np.inf)
    return -np.min(margins, axis=-1)


def _sorted_scores(scores):
    scores = np.asarray(scores, dtype=float)
    return np.sort(np.where(np.isnan(scores), np.inf, scores), axis=-1, kind='stable')


def robustness(scores, delta):
    """Verdict for one batch of P scores."""
    ordered = _sorted_scores(np.ravel(scores))
    rank = conformal_rank(ordered.size, delta)
    return SafetyVerdict(float(-ordered[rank - 1]), rank, ordered, delta)


def batch_robustness(scores, delta):
    """Robustness of every row of an ``(M, P)`` score matrix."""
    ordered = _sorted_scores(np.atleast_2d(scores))
    rank = conformal_rank(ordered.shape[-1], delta)
    return -ordered[:, rank - 1]


def rollout_scores(model, x0, sequences, params, safe_set):
    """Roll every sequence out under every parameter sample and score it.

    Returns:
        ``(scores, states)`` with scores ``(M, P)`` and states
        ``(M, P, N + 1, n_x)``; blown-up rollouts score ``+inf``.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    states = model.batch_rollout(x0, sequences, params, on_blowup='propagate')
    return nonconformity(states, safe_set, params[None, :, None, :]), states


def evaluate_sequences(model, x0, sequences, params, safe_set, delta):
    """One :class:`SafetyVerdict` per control sequence, plus the rollout tensor.

    ``params`` are the P samples shared by every sequence in the batch.
    """
    scores, states = rollout_scores(model, x0, sequences, params, safe_set)
    verdicts = [robustness(row, delta) for row in scores]
    logger.debug('Certified %d of %d sequences at delta=%s', sum(v.certified for v in verdicts),
                 len(verdicts), delta)
    return verdicts, states
