"""Trajectory costs evaluated over rollout tensors ``(M, P, N + 1, n_x)``."""
import numpy as np

from apps.base.exceptions import ContractViolation
from apps.base.utils.validators import validate_positive


class QuadraticTrackingCost:
    """Quadratic penalty on the deviation from a reference window.

    ``stage(x_k, u_k) = sum_i Q_i (x_k - r_k)_i^2 + sum_j R_j u_{k,j}^2`` and
    ``terminal(x_N) = s * sum_i Q_i (x_N - r_N)_i^2``. The reference window
    holds N + 1 states and is replaced every control step via :meth:`tracking`.
    """

    def __init__(self, state_weights, control_weights, terminal_scale=1.0, reference=None):
        self.state_weights = np.asarray(state_weights, dtype=float)
        self.control_weights = np.asarray(control_weights, dtype=float)
        self.terminal_scale = float(terminal_scale)
        if np.any(self.state_weights < 0) or np.any(self.control_weights < 0):
            raise ContractViolation('Cost weights must be non-negative.')
        self.reference = None if reference is None else np.asarray(reference, dtype=float)

    def tracking(self, reference):
        return QuadraticTrackingCost(self.state_weights, self.control_weights, self.terminal_scale, reference)

    def _reference(self):
        if self.reference is None:
            raise ContractViolation('No reference window set; call tracking() first.')
        return self.reference

    def stage(self, states, controls):
        error = states - self._reference()[:-1]
        return np.sum(self.state_weights * error ** 2, axis=-1) + np.sum(self.control_weights * controls ** 2, axis=-1)

    def terminal(self, states):
        error = states - self._reference()[-1]
        return self.terminal_scale * np.sum(self.state_weights * error ** 2, axis=-1)


def trajectory_costs(states, sequences, stage_cost, terminal_cost):
    """Per-rollout cost ``sum_k l(x_k, u_k) + L(x_N)``, shape ``(M, P)``."""
    states = np.asarray(states, dtype=float)
    sequences = np.asarray(sequences, dtype=float)
    if states.ndim != 4 or sequences.shape[:2] != (states.shape[0], states.shape[2] - 1):
        raise ContractViolation(
            f'states {states.shape} and sequences {sequences.shape} do not describe the same rollouts.'
        )
    with np.errstate(over='ignore', invalid='ignore'):
        stage = stage_cost(states[:, :, :-1, :], sequences[:, None, :, :])
        return np.sum(stage, axis=-1) + terminal_cost(states[:, :, -1, :])


def expected_cost(states, sequences, stage_cost, terminal_cost):
    """Mean trajectory cost over the P parameter hypotheses of each sequence.

    Non-finite costs are reported as ``+inf``.
    """
    with np.errstate(over='ignore', invalid='ignore'):
        costs = np.mean(trajectory_costs(states, sequences, stage_cost, terminal_cost), axis=1)
    return np.where(np.isfinite(costs), costs, np.inf)


def penalized_cost(expected, robustness, penalty):
    """``J + W * 1{R < 0}``; a robustness of exactly zero is not penalised."""
    validate_positive(penalty, 'penalty')
    expected = np.asarray(expected, dtype=float)
    return expected + np.where(np.asarray(robustness) < 0.0, penalty, 0.0)
