"""One randomised trial: sample the true parameters, then fly every lap.

The trial owns its controller, belief and random streams. The true system
is stepped with the sampled parameters; the controller and the belief only
see noisy state observations. The belief persists across laps while the
state and the controller sequences are reset at the start of each lap.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from apps.base.exceptions import DegenerateBatch, IntegrationBlowup, PRMPPIError
from apps.belief.types import TransitionObservation

from .metrics import compute_pa, compute_rmse
from .signals import episode_finished, lap_completed
from .variants import belief_options, build_controller, build_estimator, controller_options, get_variant

logger = logging.getLogger(__name__)

COMPLETED = 'completed'
DIVERGED = 'diverged'
FAILED = 'failed'


@dataclass
class TrialRecord:
    """Outcome of one trial.

    A trial that diverges or fails counts one extra violation, so
    ``success`` is exactly ``violations == 0``.
    """

    environment: str
    variant: str
    seed: int
    true_params: list
    learns: bool
    status: str = COMPLETED
    rmse: float = math.nan
    lap_rmse: list = field(default_factory=list)
    pa_trace: list = field(default_factory=list)
    violations: int = 0
    steps: int = 0
    belief_updates: int = 0
    branch_counts: dict = field(default_factory=dict)
    step_times: dict = field(default_factory=dict)
    error: str = ''

    @property
    def success(self):
        return self.violations == 0

    def as_dict(self):
        data = asdict(self)
        data['success'] = self.success
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop('success', None)
        return cls(**data)

    @classmethod
    def failed(cls, environment, variant, seed, error):
        return cls(environment, variant, seed, [], False, status=FAILED, violations=1, error=str(error))


@dataclass
class TrialResult:
    record: TrialRecord
    steps: pd.DataFrame
    beliefs: list

    def as_payload(self):
        """JSON-friendly form used to ship results back from Celery workers."""
        return {
            'record': self.record.as_dict(),
            'steps': self.steps.to_dict(orient='split'),
            'beliefs': [frame.to_dict(orient='split') for frame in self.beliefs],
        }

    @classmethod
    def from_payload(cls, payload):
        def frame(data):
            return pd.DataFrame(data['data'], columns=data['columns'])

        return cls(
            TrialRecord.from_dict(payload['record']),
            frame(payload['steps']),
            [frame(data) for data in payload['beliefs']],
        )


def trial_streams(seed):
    """Independent generators for the true parameters, the belief prior, the controller and the noise.

    The first two streams depend on the seed only, so every variant flies
    the same randomised system on the same seed.
    """
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(4)]


def _step_times(durations):
    if not durations:
        return {}
    frame = pd.DataFrame(durations)
    times = {'step_mean': float(frame.sum(axis=1).mean()), 'step_max': float(frame.sum(axis=1).max())}
    times.update({f'{phase}_mean': float(value) for phase, value in frame.mean().items()})
    return times


def run_episode(environment, variant_name, seed, controller_overrides=None, belief_overrides=None,
                log_steps=False):
    """Run one trial of ``variant_name`` on ``environment``.

    Integration blow-ups of the true system, batches in which every rollout
    is infeasible and states outside the environment's limits end the trial
    as diverged; any other domain error ends it as failed. Neither aborts
    the caller.

    Returns:
        A :class:`TrialResult` with the record, the per-step log and one
        belief snapshot before the first lap and after every lap.
    """
    variant = get_variant(variant_name)
    model = environment.model
    d = model.descriptor
    param_rng, belief_rng, control_rng, noise_rng = trial_streams(seed)

    true_params = environment.prior.sample(1, param_rng)[0]
    options = controller_options(environment, controller_overrides)
    estimator = build_estimator(variant, environment, true_params, belief_options(belief_overrides), belief_rng)
    controller = build_controller(variant, environment, estimator, options)

    record = TrialRecord(environment.name, variant.name, seed, true_params.tolist(), estimator.learns,
                         branch_counts={'nominal': 0, 'robust': 0})
    rows, durations, beliefs = [], [], [estimator.snapshot_frame()]
    state_labels = list(d.state_labels)
    control_labels = [f'u_{i}' for i in range(d.n_u)]
    reference = environment.lap_reference()

    def observe(x):
        return x + environment.observation_noise.sample(noise_rng)

    for lap in range(1, environment.laps + 1):
        x = environment.initial_state.copy()
        trajectory = [x]
        controller.reset()
        previous = None
        lap_violations = lap_fallbacks = 0
        try:
            for k in range(environment.episode_length):
                x_obs = observe(x)
                if previous is not None:
                    estimator.update(TransitionObservation(previous[0], previous[1], x_obs))
                u, diagnostics = controller.control_step(x_obs, environment.reference_window(k, controller.steps),
                                                         control_rng)
                durations.append(dict(diagnostics.timings))

                x_next = model.step(x, u, true_params)
                if np.any(environment.process_noise_std):
                    x_next = x_next + environment.process_noise_std * noise_rng.standard_normal(d.n_x)
                margin = float(environment.safe_set.margin(x_next, true_params))

                record.steps += 1
                record.branch_counts[diagnostics.branch] = record.branch_counts.get(diagnostics.branch, 0) + 1
                if diagnostics.branch == 'robust':
                    lap_fallbacks += 1
                if margin < 0.0:
                    lap_violations += 1
                row = {'lap': lap, 'step': k, 'time': k * d.dt}
                row.update(zip(state_labels, x))
                row.update(zip(control_labels, u))
                row['h_next'] = margin
                row.update({key: value for key, value in diagnostics.as_row().items() if not key.startswith('time_')})
                rows.append(row)
                if log_steps:
                    logger.info('%s/%s seed %d lap %d step %d: branch=%s R_nominal=%.4g R_robust=%.4g cost=%.4g',
                                environment.name, variant.name, seed, lap, k, diagnostics.branch,
                                diagnostics.robustness_nominal, diagnostics.robustness_robust, diagnostics.cost)

                previous = (x_obs, u)
                x = x_next
                trajectory.append(x)
                if environment.diverged(x):
                    raise IntegrationBlowup(f'state left the admissible region at lap {lap} step {k}.', state=x)
        except (IntegrationBlowup, DegenerateBatch) as exc:
            record.status = DIVERGED
            record.error = str(exc)
            lap_violations += 1
        except PRMPPIError as exc:
            record.status = FAILED
            record.error = str(exc)
            lap_violations += 1

        trajectory = np.array(trajectory)
        finite = np.all(np.isfinite(trajectory), axis=1)
        lap_rmse = compute_rmse(trajectory[finite], reference[:len(trajectory)][finite], environment.position_indices)
        pa = compute_pa(estimator.mean, true_params) if estimator.learns else None
        record.lap_rmse.append(lap_rmse)
        if pa is not None:
            record.pa_trace.append(pa)
        record.violations += lap_violations
        beliefs.append(estimator.snapshot_frame())
        lap_completed.send(sender=TrialRecord, environment=environment.name, variant=variant.name, seed=seed,
                           lap=lap, rmse=lap_rmse, pa=pa, violations=lap_violations, fallbacks=lap_fallbacks)
        if record.status != COMPLETED:
            break

    record.rmse = float(np.mean(record.lap_rmse))
    record.belief_updates = estimator.updates
    record.step_times = _step_times(durations)
    episode_finished.send(sender=TrialRecord, record=record)

    columns = ['lap', 'step', 'time', *state_labels, *control_labels, 'h_next',
               'branch', 'R_nominal', 'R_robust', 'cost', 'candidate']
    return TrialResult(record, pd.DataFrame(rows, columns=columns), beliefs)
