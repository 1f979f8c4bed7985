"""Benchmark environments assembled from ``settings.PRMPPI_ENVIRONMENTS``.

An environment bundles the true-system model, the safe set, a time-indexed
reference, the prior box the true parameters are randomised from and the
episode protocol (steps per lap, number of laps, noise levels).
"""
import copy
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from apps.base.exceptions import ConfigurationError, PRMPPIError
from apps.belief.types import NoiseModel
from apps.dynamics.base import ParamBox
from apps.dynamics.registry import get_model
from apps.mppi.costs import QuadraticTrackingCost
from apps.safety.sets import SensedSafeSet, make_safe_set

logger = logging.getLogger(__name__)


def deep_merge(base, overrides):
    """Return ``base`` updated recursively with ``overrides`` (neither is modified)."""
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class Reference:
    """Target state as a function of time."""

    def states(self, times):
        raise NotImplementedError


class SetpointReference(Reference):

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def states(self, times):
        return np.tile(self.target, (np.size(times), 1))


class CircleReference(Reference):
    """Planar circle in the (p_x, p_z) plane, counter-clockwise from the rightmost point."""

    def __init__(self, radius, center, period, n_x):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)
        self.omega = 2.0 * np.pi / float(period)
        self.n_x = n_x

    def states(self, times):
        phase = self.omega * np.asarray(times, dtype=float)
        states = np.zeros((phase.size, self.n_x))
        states[:, 0] = self.center[0] + self.radius * np.cos(phase)
        states[:, 1] = self.center[1] + self.radius * np.sin(phase)
        states[:, 2] = -self.radius * self.omega * np.sin(phase)
        states[:, 3] = self.radius * self.omega * np.cos(phase)
        return states


class SquareReference(Reference):
    """Square in the horizontal plane flown at constant speed and height.

    Corners are visited in the order origin, +x, +x+y, +y; the swing angles
    and their rates are referenced to zero.
    """

    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

    def __init__(self, side, origin, height, period, n_x):
        self.side = float(side)
        self.origin = np.asarray(origin, dtype=float)
        self.height = float(height)
        self.period = float(period)
        self.n_x = n_x

    def states(self, times):
        edge_time = self.period / 4.0
        speed = self.side / edge_time
        phase = np.mod(np.asarray(times, dtype=float), self.period)
        edge = np.minimum((phase // edge_time).astype(int), 3)
        fraction = (phase - edge * edge_time) / edge_time
        start = self.corners[edge]
        direction = self.corners[(edge + 1) % 4] - start

        states = np.zeros((phase.size, self.n_x))
        states[:, 0:2] = self.origin + self.side * (start + fraction[:, None] * direction)
        states[:, 2] = self.height
        states[:, 5:7] = speed * direction
        return states


def make_reference(spec, model):
    n_x = model.descriptor.n_x
    kind = spec.get('kind')
    if kind == 'setpoint':
        return SetpointReference(spec['target'])
    if kind == 'circle':
        return CircleReference(spec['radius'], spec['center'], spec['period'], n_x)
    if kind == 'square':
        return SquareReference(spec['side'], spec.get('origin', (0.0, 0.0)), spec['height'], spec['period'], n_x)
    raise ConfigurationError(f'Unknown reference kind {kind!r}.', kind=kind)


@dataclass
class Environment:
    name: str
    model: object
    safe_set: object
    reference: Reference
    prior: ParamBox
    episode_length: int
    laps: int
    initial_state: np.ndarray
    cost: QuadraticTrackingCost
    observation_noise: NoiseModel
    process_noise_std: np.ndarray
    position_indices: list
    state_limits: np.ndarray
    floor: float = None
    controller: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def dt(self):
        return self.model.descriptor.dt

    def reference_window(self, step, steps):
        """The ``steps + 1`` reference states starting at control step ``step``."""
        return self.reference.states((step + np.arange(steps + 1)) * self.dt)

    def lap_reference(self):
        """Reference states for every logged state of one lap, ``(episode_length + 1, n_x)``."""
        return self.reference.states(np.arange(self.episode_length + 1) * self.dt)

    def likelihood_noise(self):
        """Noise of a transition built from two noisy observations.

        Both observations carry measurement noise and the transition itself
        carries process noise; the three are independent.
        """
        variance = 2.0 * np.diag(self.observation_noise.covariance) + self.process_noise_std ** 2
        return NoiseModel.from_std(np.sqrt(variance))

    def diverged(self, x):
        """True once the state leaves the admissible region or hits the floor."""
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > self.state_limits):
            return True
        return self.floor is not None and x[self.position_indices[-1]] < self.floor


def environment_config(name):
    """Resolve ``extends`` chains of ``PRMPPI_ENVIRONMENTS`` into one flat entry."""
    registry = settings.PRMPPI_ENVIRONMENTS
    if name not in registry:
        raise ConfigurationError(
            f'Unknown environment {name!r}; expected one of {sorted(registry)}.', name=name
        )
    entry = dict(registry[name])
    parent = entry.pop('extends', None)
    if parent is None:
        return copy.deepcopy(entry)
    if parent == name:
        raise ConfigurationError(f'Environment {name!r} extends itself.', name=name)
    return deep_merge(environment_config(parent), entry)


def make_environment(name, overrides=None):
    """Build the environment registered under ``name``.

    Args:
        name: a key of ``settings.PRMPPI_ENVIRONMENTS``.
        overrides: nested dictionary merged over the settings entry, e.g.
            ``{'episode_length': 50, 'reference': {'radius': 0.4}}``.

    Raises:
        ConfigurationError: for unknown names and for entries the model,
            safe set or reference reject.
    """
    config = deep_merge(environment_config(name), overrides)
    try:
        return _build(name, config)
    except ConfigurationError:
        raise
    except (PRMPPIError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f'Invalid environment {name!r}: {exc}', name=name) from exc


def _build(name, config):
    model = get_model(config['model'], **config.get('model_options', {}))
    d = model.descriptor

    prior = ParamBox.from_pairs(config['prior_box'])
    if prior.dim != d.n_theta or not prior.is_subset_of(d.bounds):
        raise ConfigurationError(
            f'{name}: prior box {prior.low}..{prior.high} is not inside the admissible box of {d.name}.'
        )

    safe_set = make_safe_set(config['safe_set'], model)
    if config.get('sensing_radius') is not None:
        safe_set = SensedSafeSet(safe_set, config['sensing_radius'])

    reference = make_reference(config['reference'], model)
    if reference.states(np.zeros(1)).shape != (1, d.n_x):
        raise ConfigurationError(f'{name}: reference does not produce {d.n_x}-dimensional states.')

    initial_state = config.get('initial_state')
    if initial_state is None:
        initial_state = reference.states(np.zeros(1))[0]
    initial_state = np.asarray(initial_state, dtype=float)
    if initial_state.shape != (d.n_x,):
        raise ConfigurationError(f'{name}: initial_state must have {d.n_x} entries.')

    episode_length = int(config['episode_length'])
    laps = int(config['laps'])
    if episode_length < 1 or laps < 1:
        raise ConfigurationError(f'{name}: episode_length and laps must be at least 1.')

    cost = config['cost']
    if len(cost['state_weights']) != d.n_x or len(cost['control_weights']) != d.n_u:
        raise ConfigurationError(f'{name}: cost weights must have {d.n_x} state and {d.n_u} control entries.')
    return Environment(
        name=name,
        model=model,
        safe_set=safe_set,
        reference=reference,
        prior=prior,
        episode_length=episode_length,
        laps=laps,
        initial_state=initial_state,
        cost=QuadraticTrackingCost(cost['state_weights'], cost['control_weights'], cost.get('terminal_scale', 1.0)),
        observation_noise=NoiseModel.from_std(config['observation_noise_std']),
        process_noise_std=np.asarray(config.get('process_noise_std', np.zeros(d.n_x)), dtype=float),
        position_indices=list(config['position_indices']),
        state_limits=np.asarray(config.get('state_limits', np.full(d.n_x, np.inf)), dtype=float),
        floor=config.get('floor'),
        controller=dict(config.get('controller', {})),
        config=config,
    )
