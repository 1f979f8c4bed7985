"""Gaussian kernel density estimate over a parameter particle set."""
import logging

import numpy as np
from scipy.special import logsumexp, softmax

from apps.base.exceptions import ContractViolation
from apps.base.utils.validators import validate_count

logger = logging.getLogger(__name__)

# log of the smallest positive normal double
LOG_DENSITY_FLOOR = float(np.log(np.finfo(float).tiny))


def silverman_factor(count, dim):
    return (4.0 / ((dim + 2.0) * count)) ** (1.0 / (dim + 4.0))


def kde_bandwidth(particles, bounds=None, floor_fraction=1e-4):
    """Per-dimension Silverman bandwidth ``std_d * (4 / ((d + 2) N))^(1 / (d + 4))``.

    The floor is ``floor_fraction`` times the width of ``bounds`` in each
    dimension (or ``floor_fraction`` itself without bounds).
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    count, dim = particles.shape
    if count < 2:
        raise ContractViolation(f'Silverman bandwidth needs at least 2 particles, got {count}.')
    bandwidth = particles.std(axis=0, ddof=1) * silverman_factor(count, dim)
    floor = floor_fraction * (bounds.width if bounds is not None else np.ones(dim))
    floor = np.where(floor > 0, floor, floor_fraction)
    collapsed = bandwidth < floor
    if np.any(collapsed):
        logger.warning(
            'KDE bandwidth below floor in dimensions %s; using floor %s',
            np.flatnonzero(collapsed).tolist(), floor[collapsed].tolist(),
        )
        bandwidth = np.where(collapsed, floor, bandwidth)
    return bandwidth


def _log_kernels(belief, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != belief.dim:
        raise ContractViolation(f'theta must have trailing dimension {belief.dim}, got {theta.shape}.')
    sigma = belief.bandwidth
    z = (theta[..., None, :] - belief.centres) / sigma
    log_norm = -np.sum(np.log(sigma)) - 0.5 * belief.dim * np.log(2.0 * np.pi)
    return log_norm - 0.5 * np.sum(z ** 2, axis=-1)


def kde_log_density(belief, theta):
    """log of ``(1/N) sum_i N(theta; c_i, diag(sigma^2))``, evaluated in log-space."""
    log_k = _log_kernels(belief, theta)
    log_density = logsumexp(log_k, axis=-1) - np.log(belief.count)
    if not np.all(np.isfinite(log_density)):
        logger.warning('KDE log density underflowed; clamping to %.1f', LOG_DENSITY_FLOOR)
        log_density = np.nan_to_num(log_density, nan=LOG_DENSITY_FLOOR, neginf=LOG_DENSITY_FLOOR)
    return log_density


def kde_density(belief, theta):
    return np.exp(kde_log_density(belief, theta))


def kde_log_grad(belief, theta):
    """Gradient of :func:`kde_log_density` with respect to ``theta``."""
    theta = np.asarray(theta, dtype=float)
    responsibilities = softmax(_log_kernels(belief, theta), axis=-1)
    pull = -(theta[..., None, :] - belief.centres) / belief.bandwidth ** 2
    return np.sum(responsibilities[..., None] * pull, axis=-2)


def kde_sample(belief, count, rng):
    """Draw from the KDE mixture: a uniformly chosen centre plus kernel noise, clamped to the box."""
    count = validate_count(count, 'count')
    index = rng.integers(0, belief.count, size=count)
    noise = rng.standard_normal((count, belief.dim)) * belief.bandwidth
    return belief.bounds.project(belief.centres[index] + noise)
