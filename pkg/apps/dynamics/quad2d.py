"""Planar quadrotor in the x-z plane.

State ``[p_x, p_z, v_x, v_z, alpha, omega]`` (alpha is the pitch angle,
positive tilts the thrust toward +x), input ``[u_1, u_2]``, parameters
``theta = (m, I_z)``.

Inputs are motor thrust deviations from the nominal hover thrust, so
``u = 0`` holds the nominal vehicle in hover and a zero-initialised control
sequence does not free-fall::

    T_i       = u_i + m_nom g / 2
    v_x_dot   = sin(alpha) (T_1 + T_2) / m
    v_z_dot   = cos(alpha) (T_1 + T_2) / m - g
    omega_dot = l (T_2 - T_1) / I_z

The feed-forward uses the fixed nominal mass, never the hypothesis mass,
so hover thrust stays informative about m. Thrust limits are
``0 <= T_i <= thrust_max``.
"""
import numpy as np

from .base import DynamicsModel, ModelDescriptor, ParamBox, jacobian_block, stack_rows


class PlanarQuadrotor(DynamicsModel):

    def __init__(self, dt=0.02, arm_length=0.028, thrust_max=0.3, gravity=9.81,
                 nominal_params=(0.027, 1.4e-5), bounds=((0.005, 0.1), (1e-6, 1e-4))):
        self.arm_length = float(arm_length)
        self.gravity = float(gravity)
        nominal_params = np.asarray(nominal_params, dtype=float)
        self.hover_thrust = float(nominal_params[0] * self.gravity / 2.0)
        self.descriptor = ModelDescriptor(
            name='quad2d',
            n_x=6,
            n_u=2,
            n_theta=2,
            dt=float(dt),
            nominal_params=nominal_params,
            param_labels=('m', 'I_z'),
            state_labels=('p_x', 'p_z', 'v_x', 'v_z', 'alpha', 'omega'),
            bounds=ParamBox.from_pairs(bounds),
            u_low=np.full(2, -self.hover_thrust),
            u_high=np.full(2, thrust_max - self.hover_thrust),
            constants={'arm_length': self.arm_length, 'gravity': self.gravity,
                       'hover_thrust': self.hover_thrust, 'thrust_max': float(thrust_max)},
        )

    def thrusts(self, u):
        return u + self.hover_thrust

    def derivatives(self, x, u, theta):
        thrust = self.thrusts(u)
        total = thrust[..., 0] + thrust[..., 1]
        alpha = x[..., 4]
        m, inertia = theta[..., 0], theta[..., 1]
        return stack_rows(
            x[..., 2],
            x[..., 3],
            np.sin(alpha) * total / m,
            np.cos(alpha) * total / m - self.gravity,
            x[..., 5],
            self.arm_length * (thrust[..., 1] - thrust[..., 0]) / inertia,
        )

    def derivative_jacobians(self, x, u, theta):
        thrust = self.thrusts(u)
        total = thrust[..., 0] + thrust[..., 1]
        torque = self.arm_length * (thrust[..., 1] - thrust[..., 0])
        alpha = x[..., 4]
        s, c = np.sin(alpha), np.cos(alpha)
        m, inertia = theta[..., 0], theta[..., 1]

        batch = np.broadcast(x[..., 0], u[..., 0], theta[..., 0]).shape
        dfdx = jacobian_block({
            (0, 2): 1.0,
            (1, 3): 1.0,
            (2, 4): c * total / m,
            (3, 4): -s * total / m,
            (4, 5): 1.0,
        }, batch, 6, 6)
        dfdtheta = jacobian_block({
            (2, 0): -s * total / m ** 2,
            (3, 0): -c * total / m ** 2,
            (5, 1): -torque / inertia ** 2,
        }, batch, 6, 2)
        return dfdx, dfdtheta
