"""Parameter-robust MPPI: a nominal and a robust sequence optimised side by side.

Each control step samples P parameter hypotheses once, perturbs both
sequences with the same noise draw and rolls the two batches out under the
shared samples. The nominal sequence is updated from whichever batch gives
the cheaper penalised candidate; the robust sequence is updated to maximise
the conformal robustness. The nominal first control is applied only when the
re-rolled nominal sequence is certified; otherwise the robust sequence takes
over.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from apps.base.exceptions import DegenerateBatch
from apps.base.utils.validators import validate_count, validate_positive, validate_probability
from apps.mppi.controller import PhaseTimer, StepDiagnostics, evaluate_rollouts
from apps.mppi.costs import expected_cost, penalized_cost
from apps.mppi.sampling import importance_weights, perturb, sample_perturbations, time_shift, weighted_update
from apps.safety.conformal import conformal_rank, default_samples, nonconformity, robustness

logger = logging.getLogger(__name__)

NOMINAL = 'nominal'
ROBUST = 'robust'


@dataclass(frozen=True)
class ControllerConfig:
    delta: float
    samples: int
    rollouts: int
    horizon: int
    noise: object
    penalty: float
    robust_beta: float
    parallel_branches: bool = False

    def __post_init__(self):
        validate_probability(self.delta)
        validate_count(self.samples, 'samples')
        validate_count(self.rollouts, 'rollouts')
        validate_count(self.horizon, 'horizon', minimum=2)
        validate_positive(self.penalty, 'penalty')
        validate_positive(self.robust_beta, 'robust_beta')
        conformal_rank(self.samples, self.delta)

    @classmethod
    def from_options(cls, options, noise):
        samples = options.get('samples') or default_samples(options['delta'])
        return cls(
            delta=options['delta'],
            samples=samples,
            rollouts=options['rollouts'],
            horizon=options['horizon'],
            noise=noise,
            penalty=options['penalty'],
            robust_beta=options['robust_beta'],
            parallel_branches=options.get('parallel_branches', False),
        )

    @property
    def steps(self):
        return self.horizon - 1


@dataclass(frozen=True)
class ControllerState:
    nominal: np.ndarray
    robust: np.ndarray
    last_action_source: str = NOMINAL

    @classmethod
    def initial(cls, steps, n_u):
        return cls(np.zeros((steps, n_u)), np.zeros((steps, n_u)))


def nominal_cost(states, sequence, cost, safe_set, delta, penalty, params=None):
    """Expected cost of one sequence plus ``W`` when its robustness is negative.

    ``states`` holds the ``(P, N + 1, n_x)`` rollouts of ``sequence``.
    """
    states = np.asarray(states, dtype=float)
    scores = nonconformity(states, safe_set, None if params is None else params[:, None, :])
    expected = expected_cost(states[None], np.asarray(sequence)[None], cost.stage, cost.terminal)[0]
    return float(penalized_cost(expected, robustness(scores, delta).robustness, penalty))


def robust_cost(scores, delta):
    """``-R`` of one sequence's score batch."""
    return -robustness(scores, delta).robustness


def _penalized(batch, penalty):
    return penalized_cost(batch.expected, batch.robustness, penalty)


def _candidate(batch, costs, beta, model):
    d = model.descriptor
    try:
        weights = importance_weights(costs, beta)
    except DegenerateBatch:
        return None
    return weighted_update(batch.sequences, weights, d.u_low, d.u_high)


def control_step(ctrl, estimator, x, model, safe_set, cost, cfg, rng):
    """One step of the dual-trajectory controller.

    Args:
        ctrl: the :class:`ControllerState` from the previous step.
        estimator: belief to sample parameters from; only read.
        cost: tracking cost already bound to this step's reference window.

    Returns:
        ``(u, state, diagnostics)``.

    Raises:
        DegenerateBatch: if every rollout of both batches blew up.
    """
    timer = PhaseTimer()
    nominal_base, robust_base = time_shift(ctrl.nominal), time_shift(ctrl.robust)
    params = estimator.sample(cfg.samples, rng)
    perturbations = sample_perturbations(cfg.noise, cfg.rollouts, cfg.steps, rng)
    nominal_set = safe_set.nominal_view(x, params.mean(axis=0))
    nominal_rollouts = perturb(model, nominal_base, perturbations)
    robust_rollouts = perturb(model, robust_base, perturbations)
    timer.lap('sample')

    def evaluate(sequences):
        return evaluate_rollouts(model, x, sequences, params, cost, nominal_set, cfg.delta, robust_set=safe_set)

    if cfg.parallel_branches:
        with ThreadPoolExecutor(max_workers=2) as pool:
            first, second = pool.map(evaluate, (nominal_rollouts, robust_rollouts))
    else:
        first, second = evaluate(nominal_rollouts), evaluate(robust_rollouts)
    timer.lap('rollout')

    beta = cfg.noise.beta
    candidates = [
        _candidate(first, _penalized(first, cfg.penalty), beta, model),
        _candidate(second, _penalized(second, cfg.penalty), beta, model),
    ]
    robust_costs = -second.robust_robustness
    if all(candidate is None for candidate in candidates) and not np.any(np.isfinite(robust_costs)):
        raise DegenerateBatch('Every nominal and robust rollout is infeasible.')

    # Candidates are re-rolled one at a time so equal sequences cost exactly the same.
    candidate_costs = [
        np.inf if candidate is None else _penalized(evaluate(candidate[None]), cfg.penalty)[0]
        for candidate in candidates
    ]
    chosen = int(np.argmin(candidate_costs))
    nominal = candidates[chosen] if candidates[chosen] is not None else nominal_base

    if np.all(robust_costs == robust_costs[0]):
        robust = nominal.copy()
    else:
        robust = _candidate(second, robust_costs, cfg.robust_beta, model)
        if robust is None:
            robust = robust_base
    timer.lap('update')

    check = evaluate_rollouts(model, x, np.stack([nominal, robust]), params, cost, safe_set, cfg.delta)
    r_nominal, r_robust = float(check.robustness[0]), float(check.robustness[1])
    if r_nominal > 0.0:
        source, applied = NOMINAL, nominal[0].copy()
    else:
        source, applied = ROBUST, robust[0].copy()
        nominal = robust.copy()
        logger.debug('Nominal sequence not certified (R = %.3g); applying the robust sequence', r_nominal)
    timer.lap('check')

    diagnostics = StepDiagnostics(
        branch=source,
        robustness_nominal=r_nominal,
        robustness_robust=r_robust,
        cost=float(candidate_costs[chosen]),
        params=params,
        candidate=chosen + 1,
        timings=timer.timings,
    )
    return applied, ControllerState(nominal, robust, source), diagnostics


class PRMPPIController:
    """Stateful wrapper holding the two sequences across control steps."""

    kind = 'prmppi'

    def __init__(self, model, cost, estimator, safe_set, config):
        self.model = model
        self.cost = cost
        self.estimator = estimator
        self.safe_set = safe_set
        self.config = config
        self.reset()

    @property
    def steps(self):
        return self.config.steps

    def reset(self):
        self.state = ControllerState.initial(self.config.steps, self.model.descriptor.n_u)

    def control_step(self, x, reference, rng):
        u, self.state, diagnostics = control_step(
            self.state, self.estimator, x, self.model, self.safe_set, self.cost.tracking(reference), self.config, rng,
        )
        return u, diagnostics
