"""Controller configurations compared in the benchmark.

Every variant is one of the two controllers paired with a belief:

===================  ==============  =====================================
variant              controller      parameters sampled from
===================  ==============  =====================================
oracle               MPPI            the true parameters
nominal              MPPI            the model's nominal parameters
robust               MPPI            the static prior box, every step
prmppi               PRMPPI          SVGD particle belief
prmppi-ukf           PRMPPI          UKF Gaussian belief
prmppi-sir           PRMPPI          SIR particle filter
prmppi-no-backup     MPPI            SVGD particle belief
===================  ==============  =====================================
"""
from dataclasses import dataclass

from django.conf import settings

from apps.base.exceptions import ConfigurationError
from apps.belief.estimators import make_estimator
from apps.mppi.controller import MPPIController
from apps.mppi.sampling import NoiseConfig
from apps.prmppi.controller import ControllerConfig, PRMPPIController
from apps.safety.conformal import default_samples


@dataclass(frozen=True)
class Variant:
    name: str
    controller: str
    belief: str


VARIANTS = {
    variant.name: variant for variant in (
        Variant('oracle', 'mppi', 'true'),
        Variant('nominal', 'mppi', 'nominal'),
        Variant('robust', 'mppi', 'prior'),
        Variant('prmppi', 'prmppi', 'svgd'),
        Variant('prmppi-ukf', 'prmppi', 'ukf'),
        Variant('prmppi-sir', 'prmppi', 'sir'),
        Variant('prmppi-no-backup', 'mppi', 'svgd'),
    )
}

CONTROLLER_KEYS = (
    'delta', 'samples', 'horizon', 'rollouts', 'parallel_branches',
    'control_std', 'beta', 'robust_beta', 'penalty',
)


def get_variant(name):
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigurationError(
            f'Unknown controller variant {name!r}; expected one of {sorted(VARIANTS)}.', name=name
        ) from None


def controller_options(environment, overrides=None):
    """Controller settings: global defaults, then the environment, then the run."""
    options = dict(settings.PRMPPI_CONTROLLER_DEFAULTS)
    options.update(environment.controller)
    options.update({key: value for key, value in (overrides or {}).items() if value is not None})
    if not options.get('samples'):
        options['samples'] = default_samples(options['delta'])
    return options


def belief_options(overrides=None):
    options = dict(settings.PRMPPI_BELIEF_DEFAULTS)
    options.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return options


def build_estimator(variant, environment, true_params, options, rng):
    model = environment.model
    if variant.belief == 'true':
        return make_estimator('point', model, None, environment.prior, options, rng, theta=true_params)
    if variant.belief == 'nominal':
        return make_estimator('point', model, None, environment.prior, options, rng,
                              theta=model.descriptor.nominal_params)
    return make_estimator(variant.belief, model, environment.likelihood_noise(), environment.prior, options, rng)


def build_controller(variant, environment, estimator, options):
    """Instantiate the controller of ``variant`` reading ``estimator``.

    Raises:
        InsufficientSamples: if ``options['samples']`` cannot certify ``delta``.
    """
    noise = NoiseConfig.from_std(options['control_std'], options['beta'])
    if variant.controller == 'prmppi':
        return PRMPPIController(environment.model, environment.cost, estimator, environment.safe_set,
                                ControllerConfig.from_options(options, noise))
    return MPPIController(
        environment.model, environment.cost, noise, estimator, environment.safe_set,
        horizon=options['horizon'], rollouts=options['rollouts'], delta=options['delta'],
        samples=options['samples'], penalty=options['penalty'],
    )
