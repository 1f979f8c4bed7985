"""Perturbation sampling, importance weighting and the weighted sequence update."""
from dataclasses import dataclass

import numpy as np

from apps.base.exceptions import ContractViolation, DegenerateBatch
from apps.base.utils.validators import validate_count, validate_positive, validate_spd


@dataclass(frozen=True)
class NoiseConfig:
    """Per-step control perturbation covariance and the inverse temperature.

    An all-zero covariance is accepted and yields zero perturbations.
    """

    covariance: np.ndarray
    beta: float

    def __post_init__(self):
        covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if np.any(covariance):
            covariance = validate_spd(covariance, 'control noise covariance')
            cholesky = np.linalg.cholesky(covariance)
        elif covariance.shape[0] != covariance.shape[1]:
            raise ContractViolation(f'control noise covariance must be square, got {covariance.shape}.')
        else:
            cholesky = np.zeros_like(covariance)
        validate_positive(self.beta, 'beta')
        object.__setattr__(self, 'covariance', covariance)
        object.__setattr__(self, '_cholesky', cholesky)

    @classmethod
    def from_std(cls, std, beta):
        return cls(np.diag(np.asarray(std, dtype=float) ** 2), beta)

    @property
    def dim(self):
        return self.covariance.shape[0]

    @property
    def cholesky(self):
        return self._cholesky


def sample_perturbations(noise, count, steps, rng):
    """``(count, steps, n_u)`` i.i.d. zero-mean Gaussian perturbations."""
    count = validate_count(count, 'count')
    steps = validate_count(steps, 'steps')
    return rng.standard_normal((count, steps, noise.dim)) @ noise.cholesky.T


def importance_weights(costs, beta):
    """``w_m ~ exp(-(J_m - rho) / beta)`` with ``rho = min_m J_m``.

    Infinite (or NaN) costs get zero weight.

    Raises:
        DegenerateBatch: if no cost is finite.
    """
    validate_positive(beta, 'beta')
    costs = np.asarray(costs, dtype=float)
    costs = np.where(np.isnan(costs), np.inf, costs)
    finite = np.isfinite(costs)
    if not np.any(finite):
        raise DegenerateBatch(f'All {costs.size} rollout costs are infinite.')
    rho = np.min(costs[finite])
    weights = np.where(finite, np.exp(-(np.where(finite, costs, rho) - rho) / beta), 0.0)
    return weights / weights.sum()


def weighted_update(sequences, weights, u_low=None, u_high=None):
    """Convex combination of ``sequences (M, K, n_u)``, saturated afterwards."""
    sequences = np.asarray(sequences, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != sequences.shape[:1]:
        raise ContractViolation(f'{sequences.shape[0]} sequences but {weights.size} weights.')
    update = np.tensordot(weights, sequences, axes=1)
    if u_low is not None or u_high is not None:
        update = np.clip(update, u_low, u_high)
    return update


def time_shift(sequence):
    """Drop the first control and repeat the last one."""
    sequence = np.asarray(sequence, dtype=float)
    return np.concatenate([sequence[1:], sequence[-1:]], axis=0)


def perturb(model, base, perturbations):
    """``base + eta`` for every perturbation, clamped to the input bounds."""
    return model.saturate(base[None] + perturbations)
