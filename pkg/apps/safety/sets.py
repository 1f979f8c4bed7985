"""Safe sets C = {x : h(x) >= 0} for the benchmark tasks.

``margin(states, params)`` evaluates h over any batch of states
``(..., n_x)`` and returns ``(...)``. ``params`` is only read by sets whose
geometry depends on the unknown parameters (the payload hangs L below the
drone); it must broadcast against the batch axes of ``states``.
"""
import numpy as np

from apps.base.exceptions import ConfigurationError, ContractViolation
from apps.base.utils.validators import validate_positive


class SafeSet:
    description = ''

    def margin(self, states, params=None):
        raise NotImplementedError

    def nominal_view(self, state, params=None):
        """The set the nominal optimisation sees from ``state``; the full set by default."""
        return self

    def __repr__(self):
        return f'<{type(self).__name__}: {self.description}>'


class Unconstrained(SafeSet):
    """Constant margin; stands in for h = +inf with a finite value."""

    def __init__(self, value=1e6):
        self.value = float(value)
        self.description = f'h = {self.value:g}'

    def margin(self, states, params=None):
        states = np.asarray(states, dtype=float)
        return np.full(states.shape[:-1], self.value)


class CartpoleHalfPlane(SafeSet):
    """Cart and pole tip must both stay at ``p_c >= 0``."""

    def __init__(self, pole_length):
        self.pole_length = validate_positive(float(pole_length), 'pole_length')
        self.description = 'p_c >= 0 and p_c + 2 l sin(alpha) >= 0'

    def margin(self, states, params=None):
        states = np.asarray(states, dtype=float)
        cart = states[..., 0]
        tip = cart + self.pole_length * np.sin(states[..., 2])
        return np.minimum(cart, tip)


class HeightBand(SafeSet):
    """Signed distance to the admissible altitude band ``[z_min, z_max]``."""

    def __init__(self, z_min, z_max, index=1):
        if not z_min < z_max:
            raise ContractViolation(f'Empty height band [{z_min}, {z_max}].')
        self.z_min = float(z_min)
        self.z_max = float(z_max)
        self.index = index
        self.description = f'{self.z_min:g} <= z <= {self.z_max:g}'

    def margin(self, states, params=None):
        z = np.asarray(states, dtype=float)[..., self.index]
        return np.minimum(z - self.z_min, self.z_max - z)


def box_signed_distance(points, low, high):
    """Signed Euclidean distance from ``points (..., 3)`` to an axis-aligned box."""
    outside = np.maximum(low - points, points - high)
    exterior = np.linalg.norm(np.maximum(outside, 0.0), axis=-1)
    interior = np.minimum(np.max(outside, axis=-1), 0.0)
    return exterior + interior


class ObstacleSet(SafeSet):
    """Box obstacles and a floor for the drone and, if present, its payload.

    Bodies are points inflated by ``clearance``. The payload position depends
    on the cable length, so ``params`` is required for payload models.
    """

    def __init__(self, boxes, clearance=0.05, floor=None, model=None):
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 2, 3)
        if np.any(boxes[:, 1] < boxes[:, 0]):
            raise ContractViolation('Obstacle boxes need low <= high in every axis.')
        self.boxes = boxes
        self.clearance = float(clearance)
        self.floor = None if floor is None else float(floor)
        self.model = model
        self.description = f'{len(boxes)} boxes, clearance {self.clearance:g}'

    def _body_margin(self, points):
        margins = [box_signed_distance(points, low, high) for low, high in self.boxes]
        if self.floor is not None:
            margins.append(points[..., 2] - self.floor)
        return np.min(np.stack(margins, axis=-1), axis=-1) - self.clearance

    def bodies(self, states, params=None):
        states = np.asarray(states, dtype=float)
        points = [states[..., 0:3]]
        if self.model is not None and hasattr(self.model, 'payload_position'):
            if params is None:
                raise ContractViolation('Payload obstacle margins need the parameter vector.')
            points.append(self.model.payload_position(states, np.asarray(params, dtype=float)))
        return points

    def margin(self, states, params=None):
        return np.min(np.stack([self._body_margin(p) for p in self.bodies(states, params)]), axis=0)


class SensedSafeSet(SafeSet):
    """A constraint that the nominal branch only sees near its boundary.

    Farther than ``radius`` from the boundary (measured by the full margin at
    the current state) the nominal optimisation plans against an
    unconstrained set; ``margin`` itself is always the full constraint.

    Only the nominal branch reads :meth:`nominal_view`. The robust branch,
    the conformal certificate of the nominal candidate and the episode's
    violation count all use ``margin``, so an unsensed obstacle can still
    reject the nominal plan and trigger the fallback.
    """

    def __init__(self, base, radius=0.4, free_margin=1e6):
        self.base = base
        self.radius = validate_positive(float(radius), 'radius')
        self.free = Unconstrained(free_margin)
        self.description = f'{base.description}, sensed within {self.radius:g}'

    def margin(self, states, params=None):
        return self.base.margin(states, params)

    def revealed(self, state, params=None):
        return bool(self.base.margin(state, params) <= self.radius)

    def nominal_view(self, state, params=None):
        return self.base if self.revealed(state, params) else self.free


def make_safe_set(spec, model):
    """Build a safe set from an environment's ``safe_set`` settings entry."""
    kind = spec.get('kind')
    if kind == 'cartpole_half_plane':
        return CartpoleHalfPlane(model.pole_length)
    if kind == 'height_band':
        return HeightBand(spec['z_min'], spec['z_max'], index=spec.get('index', 1))
    if kind == 'obstacles':
        return ObstacleSet(spec['boxes'], spec.get('clearance', 0.0), spec.get('floor'), model=model)
    if kind == 'unconstrained':
        return Unconstrained(spec.get('value', 1e6))
    raise ConfigurationError(f'Unknown safe set kind {kind!r}.', kind=kind)
