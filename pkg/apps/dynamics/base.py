"""Parametric discrete-time dynamics x' = f(x, u, theta).

Every model integrates its continuous-time equations of motion with one
fixed-step RK4 step per control period. All methods broadcast over leading
batch axes: ``x`` is ``(..., n_x)``, ``u`` is ``(..., n_u)`` and ``theta`` is
``(..., n_theta)``, so one call can advance a whole particle set or an
M x P rollout grid.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from apps.base.exceptions import ContractViolation, IntegrationBlowup
from apps.base.utils.validators import validate_last_dim, validate_positive


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned box of admissible parameter values."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float).reshape(-1)
        high = np.asarray(self.high, dtype=float).reshape(-1)
        if low.shape != high.shape or np.any(high < low):
            raise ContractViolation(f'Invalid parameter box: low={low}, high={high}.')
        object.__setattr__(self, 'low', low)
        object.__setattr__(self, 'high', high)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1])

    @property
    def dim(self):
        return self.low.size

    @property
    def width(self):
        return self.high - self.low

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all((theta >= self.low) & (theta <= self.high)))

    def is_subset_of(self, other):
        return bool(np.all(self.low >= other.low) and np.all(self.high <= other.high))

    def project(self, theta):
        """Clamp ``theta`` onto the box."""
        return np.clip(theta, self.low, self.high)

    def sample(self, count, rng):
        return rng.uniform(self.low, self.high, size=(count, self.dim))


@dataclass(frozen=True)
class ModelDescriptor:
    name: str
    n_x: int
    n_u: int
    n_theta: int
    dt: float
    nominal_params: np.ndarray
    param_labels: tuple
    state_labels: tuple
    bounds: ParamBox
    u_low: np.ndarray
    u_high: np.ndarray
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_positive(self.dt, 'dt')
        if len(self.param_labels) != self.n_theta or self.bounds.dim != self.n_theta:
            raise ContractViolation(f'{self.name}: parameter labels/bounds do not match n_theta.')
        if not self.bounds.contains(self.nominal_params):
            raise ContractViolation(f'{self.name}: nominal parameters outside the admissible box.')


class DynamicsModel(ABC):
    """Base class for the benchmark models.

    Subclasses implement :meth:`derivatives` and, when the continuous-time
    partial derivatives are tractable, :meth:`derivative_jacobians`; the
    parameter Jacobian of the discrete step is then propagated exactly
    through the RK4 stages. Models without analytic partials fall back to
    central finite differences.
    """

    descriptor: ModelDescriptor

    # Relative step for finite-difference parameter Jacobians.
    fd_relative_step = 1e-6

    @property
    def name(self):
        return self.descriptor.name

    @abstractmethod
    def derivatives(self, x, u, theta):
        """Continuous-time state derivative, broadcasting over batch axes."""

    def derivative_jacobians(self, x, u, theta):
        """Return (df/dx, df/dtheta) of the continuous dynamics, or raise."""
        raise NotImplementedError

    @property
    def has_analytic_jacobian(self):
        return type(self).derivative_jacobians is not DynamicsModel.derivative_jacobians

    # -- helpers -----------------------------------------------------------

    def saturate(self, u):
        return np.clip(u, self.descriptor.u_low, self.descriptor.u_high)

    def _checked(self, x, u, theta):
        d = self.descriptor
        x = validate_last_dim(x, d.n_x, 'x')
        u = validate_last_dim(u, d.n_u, 'u')
        theta = validate_last_dim(theta, d.n_theta, 'theta')
        return x, u, theta

    def _advance(self, x, u, theta):
        dt = self.descriptor.dt
        k1 = self.derivatives(x, u, theta)
        k2 = self.derivatives(x + 0.5 * dt * k1, u, theta)
        k3 = self.derivatives(x + 0.5 * dt * k2, u, theta)
        k4 = self.derivatives(x + dt * k3, u, theta)
        return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    # -- public operations -------------------------------------------------

    def propagate(self, x, u, theta):
        """Like :meth:`step` but returns non-finite states instead of raising."""
        x, u, theta = self._checked(x, u, theta)
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            return self._advance(x, u, theta)

    def step(self, x, u, theta):
        """Advance one control period. ``u`` must already be saturated."""
        x_next = self.propagate(x, u, theta)
        if not np.all(np.isfinite(x_next)):
            raise IntegrationBlowup(f'{self.name}: non-finite state after integration step.', state=x)
        return x_next

    def param_jacobian(self, x, u, theta):
        """d step / d theta, shape ``(..., n_x, n_theta)``."""
        x, u, theta = self._checked(x, u, theta)
        if self.has_analytic_jacobian:
            return self._rk4_sensitivity(x, u, theta)
        return self._finite_difference_jacobian(x, u, theta)

    def _rk4_sensitivity(self, x, u, theta):
        dt = self.descriptor.dt
        k1 = self.derivatives(x, u, theta)
        _, s1 = self.derivative_jacobians(x, u, theta)

        x2 = x + 0.5 * dt * k1
        k2 = self.derivatives(x2, u, theta)
        a2, b2 = self.derivative_jacobians(x2, u, theta)
        s2 = a2 @ (0.5 * dt * s1) + b2

        x3 = x + 0.5 * dt * k2
        k3 = self.derivatives(x3, u, theta)
        a3, b3 = self.derivative_jacobians(x3, u, theta)
        s3 = a3 @ (0.5 * dt * s2) + b3

        x4 = x + dt * k3
        a4, b4 = self.derivative_jacobians(x4, u, theta)
        s4 = a4 @ (dt * s3) + b4

        jac = (dt / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        if not np.all(np.isfinite(jac)):
            raise IntegrationBlowup(f'{self.name}: non-finite parameter sensitivity.', state=x)
        return jac

    def _finite_difference_jacobian(self, x, u, theta):
        n_theta = self.descriptor.n_theta
        theta = np.asarray(theta, dtype=float)
        columns = []
        for i in range(n_theta):
            h = np.asarray(self.fd_relative_step * np.maximum(np.abs(theta[..., i]), 1.0))
            offset = np.zeros(theta.shape)
            offset[..., i] = h
            forward = self.step(x, u, theta + offset)
            backward = self.step(x, u, theta - offset)
            columns.append((forward - backward) / (2.0 * h[..., None]))
        return np.stack(columns, axis=-1)

    def batch_rollout(self, x0, sequences, params, on_blowup='raise'):
        """Roll out M control sequences under P parameter hypotheses.

        Returns states of shape ``(M, P, N + 1, n_x)``. With
        ``on_blowup='propagate'`` non-finite states are kept in the tensor
        so the caller can score them as infeasible.
        """
        d = self.descriptor
        x0 = validate_last_dim(x0, d.n_x, 'x0').reshape(d.n_x)
        sequences = np.asarray(sequences, dtype=float)
        params = np.atleast_2d(np.asarray(params, dtype=float))
        if sequences.ndim != 3 or sequences.shape[-1] != d.n_u:
            raise ContractViolation(f'sequences must have shape (M, N, {d.n_u}), got {sequences.shape}.')
        params = validate_last_dim(params, d.n_theta, 'params')
        if on_blowup not in ('raise', 'propagate'):
            raise ContractViolation(f"on_blowup must be 'raise' or 'propagate', got {on_blowup!r}.")

        n_seq, horizon, _ = sequences.shape
        n_par = params.shape[0]
        states = np.empty((n_seq, n_par, horizon + 1, d.n_x))
        states[:, :, 0, :] = x0
        theta = params[None, :, :]
        x = states[:, :, 0, :]
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            for k in range(horizon):
                x = self._advance(x, sequences[:, None, k, :], theta)
                if on_blowup == 'raise' and not np.all(np.isfinite(x)):
                    m, p = np.argwhere(~np.all(np.isfinite(x), axis=-1))[0]
                    raise IntegrationBlowup(
                        f'{self.name}: non-finite state after integration step.',
                        state=states[m, p, k].copy(),
                    ).tagged((int(m), int(p), k))
                states[:, :, k + 1, :] = x
        return states


def stack_rows(*rows):
    """Stack per-component arrays into the trailing axis after broadcasting."""
    return np.stack(np.broadcast_arrays(*rows), axis=-1)


def jacobian_block(entries, batch_shape, rows, cols):
    """Build a ``(*batch_shape, rows, cols)`` matrix from ``{(i, j): value}``."""
    out = np.zeros(tuple(batch_shape) + (rows, cols))
    for (i, j), value in entries.items():
        out[..., i, j] = value
    return out
