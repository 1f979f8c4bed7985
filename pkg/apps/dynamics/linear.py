"""Scalar linear reference system ``x' = theta * x + u``.

A discrete map rather than an integrated ODE; its Gaussian posterior over
``theta`` is available in closed form, which makes it the shared oracle for
the belief estimators.
"""
import numpy as np

from .base import DynamicsModel, ModelDescriptor, ParamBox


class ScalarLinear(DynamicsModel):

    def __init__(self, dt=1.0, nominal_params=(0.5,), bounds=((-10.0, 10.0),), input_limit=100.0):
        self.descriptor = ModelDescriptor(
            name='scalar_linear',
            n_x=1,
            n_u=1,
            n_theta=1,
            dt=float(dt),
            nominal_params=np.asarray(nominal_params, dtype=float),
            param_labels=('a',),
            state_labels=('x',),
            bounds=ParamBox.from_pairs(bounds),
            u_low=np.array([-input_limit], dtype=float),
            u_high=np.array([input_limit], dtype=float),
        )

    def _advance(self, x, u, theta):
        return theta * x + u

    def derivatives(self, x, u, theta):
        # Secant slope of the map over one period; step() never integrates it.
        return (self._advance(x, u, theta) - x) / self.descriptor.dt

    def param_jacobian(self, x, u, theta):
        x, u, theta = self._checked(x, u, theta)
        shape = np.broadcast(x, u, theta).shape
        return np.broadcast_to(x, shape)[..., None].copy()
