"""Quadrotor carrying a cable-suspended point-mass payload.

The quadrotor is modelled as the pivot of a spherical pendulum whose
acceleration is commanded directly: input ``u = [a_x, a_y, a_z]`` (m/s^2).
State ``[p_x, p_y, p_z, phi, theta_p, v_x, v_y, v_z, phi_dot, theta_p_dot]``
and parameters ``(L, beta_phi, beta_theta)`` (cable length, swing damping
normalised per unit payload mass).

The cable direction from the drone to the payload is::

    n = (sin(theta_p), sin(phi) cos(theta_p), -cos(phi) cos(theta_p))

so the cable hangs straight down at ``phi = theta_p = 0`` and the
coordinates are singular only when the cable is horizontal. With the
Lagrangian of a unit point mass on an accelerating pivot,
``T = |p_dot + L n_dot|^2 / 2``, ``V = g (p_z + L n_z)``, and the linear
damping forces ``beta_phi phi_dot`` and ``beta_theta theta_p_dot``::

    theta_p_ddot = -sin(theta_p) cos(theta_p) phi_dot^2
                   - (a_x cos(theta_p) - a_y sin(phi) sin(theta_p)
                      + (a_z + g) cos(phi) sin(theta_p)) / L
                   - beta_theta theta_p_dot / L^2
    phi_ddot     = 2 tan(theta_p) theta_p_dot phi_dot
                   - (a_y cos(phi) + (a_z + g) sin(phi)) / (L cos(theta_p))
                   - beta_phi phi_dot / (L^2 cos^2(theta_p))

The parameter Jacobian is taken by central finite differences with a
relative step of 1e-6 (see ``DynamicsModel.fd_relative_step``).
"""
import numpy as np

from .base import DynamicsModel, ModelDescriptor, ParamBox, stack_rows


class QuadPayload(DynamicsModel):

    model_name = 'quad_payload'
    param_labels = ('L', 'beta_phi', 'beta_theta')

    def __init__(self, dt=0.02, accel_limit=5.0, gravity=9.81,
                 nominal_params=(0.6, 0.05, 0.05),
                 bounds=((0.1, 1.5), (0.0, 0.5), (0.0, 0.5))):
        self.gravity = float(gravity)
        self.descriptor = ModelDescriptor(
            name=self.model_name,
            n_x=10,
            n_u=3,
            n_theta=len(self.param_labels),
            dt=float(dt),
            nominal_params=np.asarray(nominal_params, dtype=float),
            param_labels=self.param_labels,
            state_labels=('p_x', 'p_y', 'p_z', 'phi', 'theta_p',
                          'v_x', 'v_y', 'v_z', 'phi_dot', 'theta_p_dot'),
            bounds=ParamBox.from_pairs(bounds),
            u_low=np.full(3, -float(accel_limit)),
            u_high=np.full(3, float(accel_limit)),
            constants={'gravity': self.gravity, 'accel_limit': float(accel_limit)},
        )

    def physical_params(self, theta):
        """Return ``(L, beta_phi, beta_theta)`` for a parameter array."""
        return theta[..., 0], theta[..., 1], theta[..., 2]

    @staticmethod
    def cable_direction(x):
        phi, tht = x[..., 3], x[..., 4]
        return stack_rows(np.sin(tht), np.sin(phi) * np.cos(tht), -np.cos(phi) * np.cos(tht))

    def payload_position(self, x, theta):
        length = self.physical_params(np.asarray(theta, dtype=float))[0]
        return x[..., 0:3] + np.asarray(length)[..., None] * self.cable_direction(x)

    def pendulum_energy(self, x, theta):
        """Swing energy per unit payload mass, measured in the pivot frame."""
        length = self.physical_params(np.asarray(theta, dtype=float))[0]
        phi, tht = x[..., 3], x[..., 4]
        phi_dot, tht_dot = x[..., 8], x[..., 9]
        kinetic = 0.5 * length ** 2 * (tht_dot ** 2 + np.cos(tht) ** 2 * phi_dot ** 2)
        potential = -self.gravity * length * np.cos(phi) * np.cos(tht)
        return kinetic + potential

    def derivatives(self, x, u, theta):
        g = self.gravity
        length, beta_phi, beta_tht = self.physical_params(theta)
        phi, tht = x[..., 3], x[..., 4]
        phi_dot, tht_dot = x[..., 8], x[..., 9]
        a_x, a_y, a_z = u[..., 0], u[..., 1], u[..., 2]
        sp, cp = np.sin(phi), np.cos(phi)
        st, ct = np.sin(tht), np.cos(tht)

        tht_ddot = (
            -st * ct * phi_dot ** 2
            - (a_x * ct - a_y * sp * st + (a_z + g) * cp * st) / length
            - beta_tht * tht_dot / length ** 2
        )
        phi_ddot = (
            2.0 * (st / ct) * tht_dot * phi_dot
            - (a_y * cp + (a_z + g) * sp) / (length * ct)
            - beta_phi * phi_dot / (length ** 2 * ct ** 2)
        )
        return stack_rows(
            x[..., 5], x[..., 6], x[..., 7], phi_dot, tht_dot,
            a_x, a_y, a_z, phi_ddot, tht_ddot,
        )


class QuadPayloadLength(QuadPayload):
    """Length-only payload model: damping is fixed and only ``L`` is unknown."""

    model_name = 'quad_payload_length'
    param_labels = ('L',)

    def __init__(self, dt=0.02, accel_limit=5.0, gravity=9.81, nominal_params=(0.6,),
                 bounds=((0.1, 1.5),), damping=(0.0, 0.0)):
        self.damping = tuple(float(b) for b in damping)
        super().__init__(dt=dt, accel_limit=accel_limit, gravity=gravity,
                         nominal_params=nominal_params, bounds=bounds)

    def physical_params(self, theta):
        return theta[..., 0], self.damping[0], self.damping[1]
