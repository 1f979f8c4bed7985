from dataclasses import dataclass

import numpy as np

from apps.base.exceptions import ContractViolation
from apps.base.utils.validators import validate_spd
from apps.dynamics.base import ParamBox


@dataclass(frozen=True)
class ParameterParticles:
    """Particle approximation of the parameter posterior with its KDE.

    ``bandwidth`` holds one Gaussian kernel scale per parameter dimension.
    With ``shrinkage`` the kernel centres are pulled toward the particle mean
    by ``sqrt(1 - (bandwidth / std)^2)`` so the KDE has the same first two
    moments as the particle set.
    """

    particles: np.ndarray
    bounds: ParamBox
    bandwidth: np.ndarray
    shrinkage: bool = False
    floor_fraction: float = 1e-4

    def __post_init__(self):
        particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        bandwidth = np.broadcast_to(np.asarray(self.bandwidth, dtype=float), (particles.shape[1],)).copy()
        if particles.shape[1] != self.bounds.dim:
            raise ContractViolation(
                f'particles have {particles.shape[1]} dimensions, bounds have {self.bounds.dim}.'
            )
        if not np.all(np.isfinite(particles)):
            raise ContractViolation('particles must be finite.')
        if np.any(bandwidth <= 0):
            raise ContractViolation(f'kde bandwidth must be positive, got {bandwidth}.')
        object.__setattr__(self, 'particles', particles)
        object.__setattr__(self, 'bandwidth', bandwidth)

    @classmethod
    def from_particles(cls, particles, bounds, shrinkage=False, floor_fraction=1e-4):
        """Build the belief, setting the bandwidth by Silverman's rule."""
        from .kde import kde_bandwidth

        particles = bounds.project(np.atleast_2d(np.asarray(particles, dtype=float)))
        bandwidth = kde_bandwidth(particles, bounds=bounds, floor_fraction=floor_fraction)
        return cls(particles, bounds, bandwidth, shrinkage=shrinkage, floor_fraction=floor_fraction)

    @classmethod
    def from_prior(cls, bounds, count, rng, **options):
        return cls.from_particles(bounds.sample(count, rng), bounds, **options)

    def with_particles(self, particles):
        """Same settings, new particle set, bandwidth recomputed."""
        return type(self).from_particles(
            particles, self.bounds, shrinkage=self.shrinkage, floor_fraction=self.floor_fraction
        )

    @property
    def count(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]

    @property
    def mean(self):
        return self.particles.mean(axis=0)

    @property
    def shrink_factor(self):
        if not self.shrinkage or self.count < 2:
            return np.ones(self.dim)
        std = self.particles.std(axis=0, ddof=1)
        ratio = np.divide(self.bandwidth, std, out=np.ones(self.dim), where=std > 0)
        return np.where(std > 0, np.sqrt(np.clip(1.0 - ratio ** 2, 0.0, 1.0)), 1.0)

    @property
    def centres(self):
        """Kernel centres of the KDE."""
        mean = self.mean
        return mean + self.shrink_factor * (self.particles - mean)

    @property
    def variance(self):
        """Per-dimension variance of the KDE mixture."""
        return self.centres.var(axis=0) + self.bandwidth ** 2


@dataclass(frozen=True)
class WeightedParticles:
    """Importance-weighted particle set used by the SIR baseline."""

    particles: np.ndarray
    weights: np.ndarray
    bounds: ParamBox

    def __post_init__(self):
        particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.size != particles.shape[0]:
            raise ContractViolation('one weight per particle is required.')
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ContractViolation('weights must be non-negative and sum to 1.')
        object.__setattr__(self, 'particles', particles)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, particles, bounds):
        particles = np.atleast_2d(np.asarray(particles, dtype=float))
        count = particles.shape[0]
        return cls(particles, np.full(count, 1.0 / count), bounds)

    @property
    def mean(self):
        return self.weights @ self.particles

    @property
    def effective_sample_size(self):
        return 1.0 / np.sum(self.weights ** 2)


@dataclass(frozen=True)
class TransitionObservation:
    x_prev: np.ndarray
    u_prev: np.ndarray
    x_next: np.ndarray

    def __post_init__(self):
        for name in ('x_prev', 'u_prev', 'x_next'):
            value = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(value)):
                raise ContractViolation(f'{name} must be finite.')
            object.__setattr__(self, name, value)
        if self.x_prev.shape != self.x_next.shape:
            raise ContractViolation('x_prev and x_next must have the same dimension.')

    def check(self, descriptor):
        if self.x_prev.size != descriptor.n_x or self.u_prev.size != descriptor.n_u:
            raise ContractViolation(
                f'observation dimensions ({self.x_prev.size}, {self.u_prev.size}) do not match '
                f'{descriptor.name} ({descriptor.n_x}, {descriptor.n_u}).'
            )
        return self


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian observation noise on the next state, ``xi ~ N(0, covariance)``."""

    covariance: np.ndarray

    def __post_init__(self):
        covariance = validate_spd(self.covariance, 'observation noise covariance')
        object.__setattr__(self, 'covariance', covariance)
        object.__setattr__(self, '_precision', np.linalg.inv(covariance))
        object.__setattr__(self, '_cholesky', np.linalg.cholesky(covariance))
        _, logdet = np.linalg.slogdet(covariance)
        object.__setattr__(self, '_log_norm', -0.5 * (logdet + covariance.shape[0] * np.log(2.0 * np.pi)))

    @classmethod
    def from_std(cls, std):
        std = np.atleast_1d(np.asarray(std, dtype=float))
        return cls(np.diag(std ** 2))

    @property
    def dim(self):
        return self.covariance.shape[0]

    @property
    def precision(self):
        return self._precision

    @property
    def cholesky(self):
        return self._cholesky

    def log_likelihood(self, residual):
        """Gaussian log density of ``residual`` (..., n_x)."""
        residual = np.asarray(residual, dtype=float)
        mahalanobis = np.einsum('...i,ij,...j->...', residual, self._precision, residual)
        return self._log_norm - 0.5 * mahalanobis

    def sample(self, rng):
        return self._cholesky @ rng.standard_normal(self.dim)


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        covariance = validate_spd(self.covariance, 'belief covariance', symmetry_tol=1e-9)
        if covariance.shape != (mean.size, mean.size):
            raise ContractViolation('belief covariance does not match the mean dimension.')
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'covariance', covariance)

    @classmethod
    def from_box(cls, bounds):
        """Moment-matched Gaussian of a uniform prior box."""
        return cls((bounds.low + bounds.high) / 2.0, np.diag(bounds.width ** 2 / 12.0))
