"""Baseline parameter estimators: unscented Kalman filter and SIR particle filter."""
import logging

import numpy as np
from filterpy.kalman import MerweScaledSigmaPoints, UnscentedKalmanFilter
from scipy.special import logsumexp

from apps.base.exceptions import ContractViolation, EstimatorDivergence
from apps.base.utils.validators import validate_spd

from .types import GaussianBelief, WeightedParticles

logger = logging.getLogger(__name__)

# Diagonal jitter tried, relative to the covariance scale, when Cholesky fails.
JITTER_SCALES = (1e-9, 1e-6, 1e-3)


def _identity(theta, dt):
    return theta


def _make_filter(belief, model, obs, noise, process_noise, alpha):
    dim = belief.mean.size
    bounds = model.descriptor.bounds

    def measure(theta):
        return model.step(obs.x_prev, obs.u_prev, bounds.project(theta))

    points = MerweScaledSigmaPoints(dim, alpha=alpha, beta=2.0, kappa=3.0 - dim)
    ukf = UnscentedKalmanFilter(
        dim_x=dim, dim_z=noise.dim, dt=model.descriptor.dt, fx=_identity, hx=measure, points=points,
    )
    ukf.x = belief.mean.copy()
    ukf.P = belief.covariance.copy()
    ukf.Q = process_noise
    ukf.R = noise.covariance
    return ukf


def _run_filter(ukf, z):
    ukf.predict()
    # Sigma points for the update are drawn from the predicted belief.
    ukf.sigmas_f = ukf.points_fn.sigma_points(ukf.x, ukf.P)
    ukf.update(z)
    covariance = 0.5 * (ukf.P + ukf.P.T)
    np.linalg.cholesky(covariance)
    return GaussianBelief(ukf.x.copy(), covariance)


def ukf_update(belief, model, obs, noise, process_noise, alpha=1.0):
    """One unscented update treating theta as a static state.

    The process model is the identity plus ``process_noise``; the measurement
    model is ``x_next = f(x_prev, u_prev, theta) + xi``. On a Cholesky
    failure the covariance is regularised with growing diagonal jitter.

    Raises:
        EstimatorDivergence: if the covariance cannot be repaired.
    """
    obs.check(model.descriptor)
    process_noise = np.atleast_2d(np.asarray(process_noise, dtype=float))
    if process_noise.shape != belief.covariance.shape:
        raise ContractViolation('process noise must match the belief covariance.')
    if np.any(process_noise):
        validate_spd(process_noise, 'process noise')

    scale = max(float(np.trace(belief.covariance)) / belief.mean.size, np.finfo(float).tiny)
    for jitter in (0.0,) + JITTER_SCALES:
        if jitter:
            logger.warning('UKF covariance not positive definite; adding jitter %.1e', jitter * scale)
        covariance = belief.covariance + jitter * scale * np.eye(belief.mean.size)
        ukf = _make_filter(GaussianBelief(belief.mean, covariance) if jitter else belief,
                           model, obs, noise, process_noise, alpha)
        try:
            return _run_filter(ukf, obs.x_next)
        except (np.linalg.LinAlgError, ContractViolation):
            continue
    raise EstimatorDivergence('UKF covariance lost positive definiteness after jitter.')


def systematic_resample(weights, rng):
    """Indices drawn by systematic resampling with a single uniform offset."""
    count = weights.size
    positions = (rng.random() + np.arange(count)) / count
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side='right')


def sir_update(belief, model, obs, noise, resample_threshold, rng):
    """Reweight by the transition likelihood; resample when the ESS drops.

    Resampling is systematic and happens when the effective sample size
    falls below ``resample_threshold * N``. If every likelihood vanishes the
    weights are reset to uniform.
    """
    obs.check(model.descriptor)
    if not 0.0 <= resample_threshold <= 1.0:
        raise ContractViolation(f'resample_threshold must lie in [0, 1], got {resample_threshold}.')

    with np.errstate(divide='ignore'):
        log_prior = np.log(belief.weights)
    predicted = model.propagate(obs.x_prev, obs.u_prev, belief.particles)
    with np.errstate(over='ignore', invalid='ignore'):
        log_lik = noise.log_likelihood(obs.x_next - predicted)
    log_lik = np.where(np.isfinite(log_lik), log_lik, -np.inf)
    log_weights = log_prior + log_lik

    if not np.any(np.isfinite(log_weights)):
        logger.warning('SIR: all %d likelihoods vanished; resetting to uniform weights', belief.weights.size)
        return WeightedParticles.uniform(belief.particles, belief.bounds)

    weights = np.exp(log_weights - logsumexp(log_weights))
    weights = weights / weights.sum()
    updated = WeightedParticles(belief.particles, weights, belief.bounds)
    if updated.effective_sample_size < resample_threshold * weights.size:
        index = systematic_resample(weights, rng)
        return WeightedParticles.uniform(belief.particles[index], belief.bounds)
    return updated
