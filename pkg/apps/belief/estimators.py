"""Belief objects the controllers sample parameters from.

Every estimator exposes the same small surface: ``update(obs)`` once per
control period, ``sample(count, rng)`` for the controller, ``mean`` for
parameter accuracy and ``snapshot_frame()`` for the belief logs. Only the
owning episode calls ``update``; controllers only read.
"""
import logging

import numpy as np
import pandas as pd

from apps.base.exceptions import ConfigurationError

from .filters import sir_update, ukf_update
from .kde import kde_sample
from .svgd import svgd_update
from .types import GaussianBelief, ParameterParticles, WeightedParticles

logger = logging.getLogger(__name__)


class ParameterEstimator:
    kind = None
    learns = True

    def __init__(self, model):
        self.model = model
        self.labels = list(model.descriptor.param_labels)
        self.updates = 0

    def update(self, obs):
        self._update(obs.check(self.model.descriptor))
        self.updates += 1

    def _update(self, obs):
        raise NotImplementedError

    def sample(self, count, rng):
        raise NotImplementedError

    @property
    def mean(self):
        raise NotImplementedError

    def snapshot_frame(self):
        raise NotImplementedError


class SVGDEstimator(ParameterEstimator):
    kind = 'svgd'

    def __init__(self, model, noise, belief, step_size=1.0, iterations=10, schedule='preconditioned'):
        super().__init__(model)
        self.noise = noise
        self.belief = belief
        self.step_size = step_size
        self.iterations = iterations
        self.schedule = schedule

    def _update(self, obs):
        self.belief = svgd_update(self.belief, self.model, obs, self.noise,
                                  step_size=self.step_size, n_iterations=self.iterations, schedule=self.schedule)

    def sample(self, count, rng):
        return kde_sample(self.belief, count, rng)

    @property
    def mean(self):
        return self.belief.mean

    def snapshot_frame(self):
        return pd.DataFrame(self.belief.particles, columns=self.labels)


class UKFEstimator(ParameterEstimator):
    kind = 'ukf'

    def __init__(self, model, noise, belief, process_noise):
        super().__init__(model)
        self.noise = noise
        self.belief = belief
        self.process_noise = process_noise

    def _update(self, obs):
        self.belief = ukf_update(self.belief, self.model, obs, self.noise, self.process_noise)

    def sample(self, count, rng):
        chol = np.linalg.cholesky(self.belief.covariance)
        draws = self.belief.mean + rng.standard_normal((count, self.belief.mean.size)) @ chol.T
        return self.model.descriptor.bounds.project(draws)

    @property
    def mean(self):
        return self.belief.mean

    def snapshot_frame(self):
        row = dict(zip(self.labels, self.belief.mean))
        row.update({f'{label}_std': std for label, std in zip(self.labels, np.sqrt(np.diag(self.belief.covariance)))})
        return pd.DataFrame([row])


class SIREstimator(ParameterEstimator):
    kind = 'sir'

    def __init__(self, model, noise, belief, resample_threshold, rng):
        super().__init__(model)
        self.noise = noise
        self.belief = belief
        self.resample_threshold = resample_threshold
        self.rng = rng

    def _update(self, obs):
        self.belief = sir_update(self.belief, self.model, obs, self.noise, self.resample_threshold, self.rng)

    def sample(self, count, rng):
        index = rng.choice(self.belief.weights.size, size=count, p=self.belief.weights)
        return self.belief.particles[index]

    @property
    def mean(self):
        return self.belief.mean

    def snapshot_frame(self):
        frame = pd.DataFrame(self.belief.particles, columns=self.labels)
        frame['weight'] = self.belief.weights
        return frame


class PointEstimator(ParameterEstimator):
    """A fixed parameter vector (true or nominal values); never learns."""

    kind = 'point'
    learns = False

    def __init__(self, model, theta):
        super().__init__(model)
        self.theta = np.asarray(theta, dtype=float).reshape(-1)

    def update(self, obs):
        pass

    def sample(self, count, rng):
        return np.tile(self.theta, (count, 1))

    @property
    def mean(self):
        return self.theta

    def snapshot_frame(self):
        return pd.DataFrame([self.theta], columns=self.labels)


class PriorEstimator(ParameterEstimator):
    """Fresh draws from the static prior box every call; never learns."""

    kind = 'prior'
    learns = False

    def __init__(self, model, bounds):
        super().__init__(model)
        self.bounds = bounds

    def update(self, obs):
        pass

    def sample(self, count, rng):
        return self.bounds.sample(count, rng)

    @property
    def mean(self):
        return (self.bounds.low + self.bounds.high) / 2.0

    def snapshot_frame(self):
        return pd.DataFrame([self.bounds.low, self.bounds.high], columns=self.labels)


def make_estimator(kind, model, noise, prior_box, options, rng, theta=None):
    """Build the estimator a controller variant asks for.

    Args:
        kind: 'svgd', 'ukf', 'sir', 'point' or 'prior'.
        options: belief settings (``PRMPPI_BELIEF_DEFAULTS`` merged with overrides).
        rng: generator for the initial particle draw (and SIR resampling).
        theta: the fixed parameters for 'point'.
    """
    if kind == 'svgd':
        belief = ParameterParticles.from_prior(
            prior_box, options['particles'], rng,
            shrinkage=options['kde_shrinkage'], floor_fraction=options['bandwidth_floor'],
        )
        return SVGDEstimator(model, noise, belief, options['svgd_step'], options['svgd_iterations'],
                             options.get('svgd_schedule', 'preconditioned'))
    if kind == 'ukf':
        belief = GaussianBelief.from_box(prior_box)
        process_noise = options['ukf_process_noise'] * belief.covariance
        return UKFEstimator(model, noise, belief, process_noise)
    if kind == 'sir':
        belief = WeightedParticles.uniform(prior_box.sample(options['particles'], rng), prior_box)
        return SIREstimator(model, noise, belief, options['sir_resample_threshold'], rng)
    if kind == 'point':
        if theta is None:
            raise ConfigurationError('a point belief needs fixed parameters.')
        return PointEstimator(model, theta)
    if kind == 'prior':
        return PriorEstimator(model, prior_box)
    raise ConfigurationError(f'Unknown belief kind {kind!r}.', kind=kind)
