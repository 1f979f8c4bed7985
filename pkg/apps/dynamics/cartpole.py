"""Frictionless cart-pole.

State ``[p_c, v_c, alpha, omega]`` (cart position and velocity, pole angle
from upright and its rate; positive alpha tilts the pole tip toward +p_c),
input ``[F]`` (horizontal force on the cart, N), parameters
``theta = (m_c, m_p)`` (cart and pole mass, kg). With pole half-length l
and M = m_c + m_p::

    tmp        = (F + m_p l omega^2 sin(alpha)) / M
    alpha_ddot = (g sin(alpha) - cos(alpha) tmp) / (l (4/3 - m_p cos^2(alpha) / M))
    v_c_dot    = tmp - m_p l alpha_ddot cos(alpha) / M

The pole tip sits at ``p_c + 2 l sin(alpha)``.
"""
import numpy as np

from .base import DynamicsModel, ModelDescriptor, ParamBox, jacobian_block, stack_rows


class CartPole(DynamicsModel):

    def __init__(self, dt=0.02, pole_half_length=0.5, force_limit=10.0, gravity=9.81,
                 nominal_params=(1.0, 0.1), bounds=((0.2, 5.0), (0.01, 1.0))):
        self.pole_half_length = float(pole_half_length)
        self.gravity = float(gravity)
        self.descriptor = ModelDescriptor(
            name='cartpole',
            n_x=4,
            n_u=1,
            n_theta=2,
            dt=float(dt),
            nominal_params=np.asarray(nominal_params, dtype=float),
            param_labels=('m_c', 'm_p'),
            state_labels=('p_c', 'v_c', 'alpha', 'omega'),
            bounds=ParamBox.from_pairs(bounds),
            u_low=np.array([-force_limit], dtype=float),
            u_high=np.array([force_limit], dtype=float),
            constants={'pole_half_length': self.pole_half_length, 'gravity': self.gravity},
        )

    @property
    def pole_length(self):
        return 2.0 * self.pole_half_length

    def _terms(self, x, u, theta):
        l, g = self.pole_half_length, self.gravity
        alpha, omega = x[..., 2], x[..., 3]
        force = u[..., 0]
        m_c, m_p = theta[..., 0], theta[..., 1]
        s, c = np.sin(alpha), np.cos(alpha)
        total = m_c + m_p
        tmp = (force + m_p * l * omega ** 2 * s) / total
        den = l * (4.0 / 3.0 - m_p * c ** 2 / total)
        alpha_ddot = (g * s - c * tmp) / den
        v_dot = tmp - m_p * l * alpha_ddot * c / total
        return {
            's': s, 'c': c, 'omega': omega, 'm_c': m_c, 'm_p': m_p, 'total': total,
            'tmp': tmp, 'den': den, 'alpha_ddot': alpha_ddot, 'v_dot': v_dot,
        }

    def derivatives(self, x, u, theta):
        t = self._terms(x, u, theta)
        return stack_rows(x[..., 1], t['v_dot'], x[..., 3], t['alpha_ddot'])

    def derivative_jacobians(self, x, u, theta):
        l, g = self.pole_half_length, self.gravity
        t = self._terms(x, u, theta)
        s, c, omega = t['s'], t['c'], t['omega']
        m_c, m_p, total = t['m_c'], t['m_p'], t['total']
        tmp, den, add = t['tmp'], t['den'], t['alpha_ddot']

        dtmp_da = m_p * l * omega ** 2 * c / total
        dtmp_dw = 2.0 * m_p * l * omega * s / total
        dtmp_dmc = -tmp / total
        dtmp_dmp = (l * omega ** 2 * s - tmp) / total

        dden_da = 2.0 * l * m_p * c * s / total
        dden_dmc = l * m_p * c ** 2 / total ** 2
        dden_dmp = -l * m_c * c ** 2 / total ** 2

        dadd_da = (g * c + s * tmp - c * dtmp_da - add * dden_da) / den
        dadd_dw = -c * dtmp_dw / den
        dadd_dmc = (-c * dtmp_dmc - add * dden_dmc) / den
        dadd_dmp = (-c * dtmp_dmp - add * dden_dmp) / den

        ratio = m_p / total
        dratio_dmc = -m_p / total ** 2
        dratio_dmp = m_c / total ** 2

        dv_da = dtmp_da - l * ratio * (-s * add + c * dadd_da)
        dv_dw = dtmp_dw - l * ratio * c * dadd_dw
        dv_dmc = dtmp_dmc - l * c * (dratio_dmc * add + ratio * dadd_dmc)
        dv_dmp = dtmp_dmp - l * c * (dratio_dmp * add + ratio * dadd_dmp)

        batch = np.broadcast(x[..., 0], u[..., 0], theta[..., 0]).shape
        dfdx = jacobian_block({
            (0, 1): 1.0,
            (1, 2): dv_da,
            (1, 3): dv_dw,
            (2, 3): 1.0,
            (3, 2): dadd_da,
            (3, 3): dadd_dw,
        }, batch, 4, 4)
        dfdtheta = jacobian_block({
            (1, 0): dv_dmc,
            (1, 1): dv_dmp,
            (3, 0): dadd_dmc,
            (3, 1): dadd_dmp,
        }, batch, 4, 2)
        return dfdx, dfdtheta
