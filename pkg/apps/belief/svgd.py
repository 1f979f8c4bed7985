"""Stein variational gradient descent toward the parameter posterior.

The target after a transition ``(x_prev, u_prev, x_next)`` is

    p(theta) ~ N(x_next; f(x_prev, u_prev, theta), Sigma_xi) * KDE_prior(theta)

whose log-gradient is ``J^T Sigma_xi^{-1} (x_next - f) + grad log KDE``
with ``J = df/dtheta``. The KDE prior stays frozen at the particle set held
before the measurement for every transport iteration.
"""
import logging

import numpy as np
from scipy.spatial.distance import pdist

from apps.base.exceptions import ContractViolation, NumericError
from apps.base.utils.validators import validate_count, validate_positive

from .kde import kde_log_density, kde_log_grad

logger = logging.getLogger(__name__)


def log_posterior(model, obs, noise, prior, theta):
    """Unnormalised log posterior (log-likelihood + log KDE prior)."""
    obs.check(model.descriptor)
    theta = np.asarray(theta, dtype=float)
    residual = obs.x_next - model.step(obs.x_prev, obs.u_prev, theta)
    return noise.log_likelihood(residual) + kde_log_density(prior, theta)


def _likelihood_terms(model, obs, noise, theta):
    residual = obs.x_next - model.step(obs.x_prev, obs.u_prev, theta)
    jac = model.param_jacobian(obs.x_prev, obs.u_prev, theta)
    weighted = residual @ noise.precision
    grad = np.einsum('...xd,...x->...d', jac, weighted)
    return grad, jac


def log_posterior_grad(model, obs, noise, prior, theta):
    """Gradient of :func:`log_posterior`; ``theta`` may be ``(n_theta,)`` or ``(N, n_theta)``."""
    obs.check(model.descriptor)
    theta = np.asarray(theta, dtype=float)
    grad, _ = _likelihood_terms(model, obs, noise, theta)
    grad = grad + kde_log_grad(prior, theta)
    if not np.all(np.isfinite(grad)):
        raise NumericError('Non-finite log-posterior gradient.', theta=theta)
    return grad


def median_bandwidth(points):
    """Median heuristic ``med^2 / log(N + 1)``; 1.0 when it degenerates."""
    points = np.atleast_2d(points)
    if points.shape[0] < 2:
        return 1.0
    med = np.median(pdist(points))
    bandwidth = med ** 2 / np.log(points.shape[0] + 1.0)
    return bandwidth if bandwidth > 0 else 1.0


def rbf_kernel(points, bandwidth):
    """``k(a, b) = exp(-|a - b|^2 / h)`` and ``grad[j, i] = d k(p_j, p_i) / d p_j``."""
    diff = points[:, None, :] - points[None, :, :]
    kernel = np.exp(-np.sum(diff ** 2, axis=-1) / bandwidth)
    grad = -2.0 / bandwidth * diff * kernel[..., None]
    return kernel, grad


def svgd_transport(particles, grad_log_p, kernel_bandwidth):
    """Empirical Stein direction for every particle.

    Row ``i`` is ``(1/N) sum_j [k(p_j, p_i) g_j + grad_{p_j} k(p_j, p_i)]``.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    grad_log_p = np.atleast_2d(np.asarray(grad_log_p, dtype=float))
    if grad_log_p.shape != particles.shape:
        raise ContractViolation('one gradient row per particle is required.')
    validate_positive(kernel_bandwidth, 'kernel_bandwidth')
    kernel, kernel_grad = rbf_kernel(particles, kernel_bandwidth)
    count = particles.shape[0]
    return (kernel.T @ grad_log_p + kernel_grad.sum(axis=0)) / count


SCHEDULES = ('preconditioned', 'adagrad')


def svgd_update(belief, model, obs, noise, step_size=1.0, n_iterations=10, schedule='preconditioned',
                adagrad_decay=0.9, adagrad_eps=1e-6):
    """Transport ``belief`` toward the posterior after ``obs``.

    With ``schedule='preconditioned'`` transport runs in the scaled
    coordinates ``z = sqrt(q) * theta`` where ``q`` is the diagonal
    Gauss-Newton curvature of the target at the starting particles, so one
    step size serves parameters whose scales differ by orders of magnitude.
    With ``schedule='adagrad'`` the Stein direction is divided per particle
    and dimension by the root of a running average of its square (small
    step sizes such as 0.05 suit this schedule). Particles are clamped to
    the parameter box after every iteration and the KDE bandwidth is
    recomputed once at the end.

    Returns:
        A new ``ParameterParticles``; ``belief`` itself is not modified.
    """
    validate_positive(step_size, 'step_size')
    n_iterations = validate_count(n_iterations, 'n_iterations', minimum=0)
    if schedule not in SCHEDULES:
        raise ContractViolation(f'Unknown SVGD schedule {schedule!r}; expected one of {SCHEDULES}.')
    obs.check(model.descriptor)

    prior = belief
    theta = belief.particles.copy()
    scale = np.ones(belief.dim)
    history = None
    for iteration in range(n_iterations):
        lik_grad, jac = _likelihood_terms(model, obs, noise, theta)
        grad = lik_grad + kde_log_grad(prior, theta)
        if not np.all(np.isfinite(grad)):
            bad = np.flatnonzero(~np.all(np.isfinite(grad), axis=-1))[0]
            raise NumericError('Non-finite log-posterior gradient.', theta=theta[bad])

        if schedule == 'adagrad':
            direction = svgd_transport(theta, grad, median_bandwidth(theta))
            if history is None:
                history = direction ** 2
            else:
                history = adagrad_decay * history + (1.0 - adagrad_decay) * direction ** 2
            theta = belief.bounds.project(theta + step_size * direction / (adagrad_eps + np.sqrt(history)))
            continue

        if iteration == 0:
            fisher = np.einsum('nxd,xy,nyd->d', jac, noise.precision, jac) / theta.shape[0]
            scale = np.sqrt(fisher + 1.0 / prior.variance)

        z = theta * scale
        direction = svgd_transport(z, grad / scale, median_bandwidth(z))
        theta = belief.bounds.project(theta + step_size * direction / scale)

    logger.debug('SVGD update (%s): %d iterations, mean %s', schedule, n_iterations, theta.mean(axis=0))
    return belief.with_particles(theta)
