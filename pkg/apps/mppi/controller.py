"""Single-trajectory MPPI over sampled parameter hypotheses.

This is the controller behind the oracle, nominal, robust and no-backup
configurations: one control sequence, a penalty ``W`` whenever the conformal
robustness of a rollout batch is negative, and no robust fallback.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from apps.base.utils.validators import validate_count, validate_positive
from apps.safety.conformal import batch_robustness, conformal_rank, nonconformity

from .costs import expected_cost, penalized_cost
from .sampling import importance_weights, perturb, sample_perturbations, time_shift, weighted_update

logger = logging.getLogger(__name__)


@dataclass
class RolloutBatch:
    """Rollouts of M sequences under P shared parameter samples.

    ``robustness`` is taken against the set the nominal cost sees and
    ``robust_robustness`` against the full constraint; they coincide unless
    the constraint is only partially observed.
    """

    sequences: np.ndarray
    states: np.ndarray
    expected: np.ndarray
    scores: np.ndarray
    robustness: np.ndarray
    robust_robustness: np.ndarray


def evaluate_rollouts(model, x0, sequences, params, cost, safe_set, delta, robust_set=None):
    states = model.batch_rollout(x0, sequences, params, on_blowup='propagate')
    broadcast = params[None, :, None, :]
    scores = nonconformity(states, safe_set, broadcast)
    robustness = batch_robustness(scores, delta)
    if robust_set is None or robust_set is safe_set:
        robust_robustness = robustness
    else:
        robust_robustness = batch_robustness(nonconformity(states, robust_set, broadcast), delta)
    expected = expected_cost(states, sequences, cost.stage, cost.terminal)
    return RolloutBatch(sequences, states, expected, scores, robustness, robust_robustness)


@dataclass
class StepDiagnostics:
    branch: str
    robustness_nominal: float
    robustness_robust: float
    cost: float
    params: np.ndarray
    candidate: int = 1
    timings: dict = field(default_factory=dict)

    def as_row(self):
        row = {
            'branch': self.branch,
            'R_nominal': self.robustness_nominal,
            'R_robust': self.robustness_robust,
            'cost': self.cost,
            'candidate': self.candidate,
        }
        row.update({f'time_{phase}': seconds for phase, seconds in self.timings.items()})
        return row


class PhaseTimer:
    """Accumulates wall time per named phase of a control step."""

    def __init__(self):
        self.timings = {}
        self._started = time.perf_counter()

    def lap(self, phase):
        now = time.perf_counter()
        self.timings[phase] = self.timings.get(phase, 0.0) + now - self._started
        self._started = now


class MPPIController:
    kind = 'mppi'

    def __init__(self, model, cost, noise, estimator, safe_set, horizon, rollouts, delta, samples, penalty):
        self.model = model
        self.cost = cost
        self.noise = noise
        self.estimator = estimator
        self.safe_set = safe_set
        self.steps = validate_count(horizon, 'horizon', minimum=2) - 1
        self.rollouts = validate_count(rollouts, 'rollouts')
        self.samples = validate_count(samples, 'samples')
        conformal_rank(self.samples, delta)
        self.delta = delta
        self.penalty = validate_positive(penalty, 'penalty')
        self.reset()

    def reset(self):
        self.sequence = np.zeros((self.steps, self.model.descriptor.n_u))

    def control_step(self, x, reference, rng):
        """Return the control to apply at ``x`` and the step diagnostics.

        Raises:
            DegenerateBatch: if every rollout of the batch blew up.
        """
        timer = PhaseTimer()
        d = self.model.descriptor
        self.sequence = time_shift(self.sequence)
        params = self.estimator.sample(self.samples, rng)
        perturbations = sample_perturbations(self.noise, self.rollouts, self.steps, rng)
        cost = self.cost.tracking(reference)
        nominal_set = self.safe_set.nominal_view(x, params.mean(axis=0))
        timer.lap('sample')

        batch = evaluate_rollouts(self.model, x, perturb(self.model, self.sequence, perturbations), params,
                                  cost, nominal_set, self.delta)
        timer.lap('rollout')

        weights = importance_weights(penalized_cost(batch.expected, batch.robustness, self.penalty), self.noise.beta)
        self.sequence = weighted_update(batch.sequences, weights, d.u_low, d.u_high)
        timer.lap('update')

        final = evaluate_rollouts(self.model, x, self.sequence[None], params, cost, nominal_set, self.delta,
                                  robust_set=self.safe_set)
        timer.lap('check')
        diagnostics = StepDiagnostics(
            branch='nominal',
            robustness_nominal=float(final.robust_robustness[0]),
            robustness_robust=float('nan'),
            cost=float(penalized_cost(final.expected, final.robustness, self.penalty)[0]),
            params=params,
            timings=timer.timings,
        )
        return self.sequence[0].copy(), diagnostics
