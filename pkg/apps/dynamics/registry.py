"""Name -> model class lookup used by configuration files."""
from apps.base.exceptions import ConfigurationError

from .cartpole import CartPole
from .linear import ScalarLinear
from .quad2d import PlanarQuadrotor
from .quad_payload import QuadPayload, QuadPayloadLength

MODELS = {
    'cartpole': CartPole,
    'quad2d': PlanarQuadrotor,
    'quad_payload': QuadPayload,
    'quad_payload_length': QuadPayloadLength,
    'scalar_linear': ScalarLinear,
}


def get_model(name, **options):
    """Instantiate the model registered under ``name``.

    Raises:
        ConfigurationError: if no model is registered under ``name`` or the
            options are not accepted by its constructor.
    """
    try:
        model_class = MODELS[name]
    except KeyError:
        raise ConfigurationError(
            f'Unknown model {name!r}; expected one of {sorted(MODELS)}.', name=name
        ) from None
    try:
        return model_class(**options)
    except TypeError as exc:
        raise ConfigurationError(f'Invalid options for model {name!r}: {exc}', name=name) from exc
