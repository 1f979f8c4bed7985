import numpy as np
import sympy as sp
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from apps.base.exceptions import ConfigurationError, ContractViolation, IntegrationBlowup

from .base import ParamBox
from .cartpole import CartPole
from .linear import ScalarLinear
from .quad2d import PlanarQuadrotor
from .quad_payload import QuadPayload
from .registry import get_model


def central_difference(model, x, u, theta):
    """Reference d step / d theta with a step relative to each parameter."""
    theta = np.asarray(theta, dtype=float)
    columns = []
    for i in range(theta.size):
        h = 1e-6 * abs(theta[i])
        offset = np.zeros_like(theta)
        offset[i] = h
        columns.append((model.step(x, u, theta + offset) - model.step(x, u, theta - offset)) / (2 * h))
    return np.stack(columns, axis=-1)


def assert_jacobian_close(test, analytic, reference, theta):
    # Compare dimensionless sensitivities column by column.
    theta = np.asarray(theta, dtype=float)
    for i in range(theta.size):
        a = analytic[:, i] * theta[i]
        r = reference[:, i] * theta[i]
        scale = max(np.max(np.abs(r)), 1e-5)
        test.assertLessEqual(np.max(np.abs(a - r)) / scale, 1e-4)


unit = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, allow_infinity=False)
fraction = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_infinity=False)


class ParamBoxTests(SimpleTestCase):

    def test_project_clamps_to_bounds(self):
        box = ParamBox.from_pairs([[0.0, 1.0], [2.0, 3.0]])
        np.testing.assert_array_equal(box.project(np.array([-1.0, 5.0])), [0.0, 3.0])

    def test_inverted_box_rejected(self):
        with self.assertRaises(ContractViolation):
            ParamBox.from_pairs([[1.0, 0.0]])

    def test_subset(self):
        outer = ParamBox.from_pairs([[0.0, 2.0]])
        self.assertTrue(ParamBox.from_pairs([[0.5, 1.0]]).is_subset_of(outer))
        self.assertFalse(ParamBox.from_pairs([[0.5, 3.0]]).is_subset_of(outer))


class CartPoleTests(SimpleTestCase):

    def setUp(self):
        self.model = CartPole()
        self.theta = np.array([1.0, 0.1])

    def test_upright_equilibrium_is_fixed(self):
        x = np.zeros(4)
        np.testing.assert_array_equal(self.model.step(x, np.zeros(1), self.theta), x)
        np.testing.assert_array_equal(self.model.step(x, np.zeros(1), np.array([0.5, 0.7])), x)

    def test_jacobian_vanishes_at_equilibrium(self):
        jac = self.model.param_jacobian(np.zeros(4), np.zeros(1), self.theta)
        np.testing.assert_array_equal(jac, np.zeros((4, 2)))

    def test_step_matches_adaptive_integration(self):
        x0 = np.array([0.0, 0.0, 0.1, 0.0])
        u = np.zeros(1)

        def rhs(_, y):
            return self.model.derivatives(y, u, self.theta)

        solution = solve_ivp(rhs, (0.0, self.model.descriptor.dt), x0, method='DOP853', rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(self.model.step(x0, u, self.theta), solution.y[:, -1], rtol=0, atol=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(p=unit, v=unit, alpha=unit, omega=unit, force=unit, a=fraction, b=fraction)
    def test_param_jacobian_matches_finite_differences(self, p, v, alpha, omega, force, a, b):
        box = self.model.descriptor.bounds
        theta = box.low + np.array([a, b]) * box.width
        x = np.array([p, 2 * v, alpha, 3 * omega])
        u = np.array([10.0 * force])
        analytic = self.model.param_jacobian(x, u, theta)
        assert_jacobian_close(self, analytic, central_difference(self.model, x, u, theta), theta)

    def test_state_dimension_checked(self):
        with self.assertRaises(ContractViolation):
            self.model.step(np.zeros(3), np.zeros(1), self.theta)

    def test_step_is_deterministic(self):
        x = np.array([0.3, -0.2, 0.4, 1.0])
        u = np.array([2.5])
        np.testing.assert_array_equal(self.model.step(x, u, self.theta), self.model.step(x, u, self.theta))

    def test_saturate(self):
        np.testing.assert_array_equal(self.model.saturate(np.array([[25.0], [-12.0], [3.0]])), [[10.0], [-10.0], [3.0]])


class PlanarQuadrotorTests(SimpleTestCase):

    def setUp(self):
        self.model = PlanarQuadrotor()
        self.theta = self.model.descriptor.nominal_params

    def test_zero_input_hovers_nominal_vehicle(self):
        x = np.array([0.2, 1.0, 0.0, 0.0, 0.0, 0.0])
        x_next = self.model.step(x, np.zeros(2), self.theta)
        np.testing.assert_allclose(x_next[2:4], x[2:4], atol=1e-12)
        np.testing.assert_allclose(x_next[5], x[5], atol=1e-12)

    def test_heavier_vehicle_sinks_at_nominal_thrust(self):
        x = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
        x_next = self.model.step(x, np.zeros(2), self.theta * np.array([1.5, 1.0]))
        self.assertLess(x_next[3], 0.0)

    def test_input_limits_follow_thrust_limits(self):
        d = self.model.descriptor
        np.testing.assert_allclose(self.model.thrusts(d.u_low), [0.0, 0.0])
        np.testing.assert_allclose(self.model.thrusts(d.u_high), [0.3, 0.3])

    @settings(max_examples=100, deadline=None)
    @given(vx=unit, vz=unit, alpha=unit, omega=unit, u1=fraction, u2=fraction, a=fraction, b=fraction)
    def test_param_jacobian_matches_finite_differences(self, vx, vz, alpha, omega, u1, u2, a, b):
        d = self.model.descriptor
        theta = d.bounds.low + (0.1 + 0.9 * np.array([a, b])) * d.bounds.width
        x = np.array([0.0, 1.0, vx, vz, alpha, 5 * omega])
        u = d.u_low + np.array([u1, u2]) * (d.u_high - d.u_low)
        analytic = self.model.param_jacobian(x, u, theta)
        assert_jacobian_close(self, analytic, central_difference(self.model, x, u, theta), theta)


class QuadPayloadTests(SimpleTestCase):

    def test_hanging_payload_at_rest_stays_at_rest(self):
        model = QuadPayload()
        x = np.zeros(10)
        x[2] = 1.0
        np.testing.assert_allclose(model.step(x, np.zeros(3), model.descriptor.nominal_params), x, atol=1e-14)

    def test_damping_columns_vanish_at_rest(self):
        model = QuadPayload()
        x = np.zeros(10)
        x[5:8] = [0.4, -0.3, 0.1]
        jac = model.param_jacobian(x, np.array([0.0, 0.0, 1.0]), np.array([0.6, 0.05, 0.05]))
        self.assertEqual(jac.shape, (10, 3))
        np.testing.assert_array_equal(jac[:, 1:], 0.0)

    def test_length_column_nonzero_when_swinging(self):
        model = QuadPayload()
        x = np.zeros(10)
        x[3], x[4] = 0.2, -0.1
        jac = model.param_jacobian(x, np.zeros(3), np.array([0.6, 0.05, 0.05]))
        self.assertGreater(np.max(np.abs(jac[:, 0])), 0.0)

    def test_undamped_energy_conserved_without_gravity(self):
        model = QuadPayload(gravity=0.0)
        theta = np.array([0.6, 0.0, 0.0])
        x = np.zeros(10)
        x[8], x[9] = 0.5, 0.2
        initial = model.pendulum_energy(x, theta)
        energies = []
        for _ in range(1000):
            x = model.step(x, np.zeros(3), theta)
            energies.append(model.pendulum_energy(x, theta))
        drift = np.max(np.abs(np.array(energies) - initial)) / initial
        self.assertLessEqual(drift, 1e-3)

    def test_damped_kinetic_energy_non_increasing(self):
        model = QuadPayload(gravity=0.0)
        theta = np.array([0.6, 0.05, 0.05])
        x = np.zeros(10)
        x[3], x[4] = 0.3, 0.1
        x[8], x[9] = 0.8, -0.6
        energy = model.pendulum_energy(x, theta)
        for _ in range(500):
            x = model.step(x, np.zeros(3), theta)
            current = model.pendulum_energy(x, theta)
            self.assertLessEqual(current, energy)
            energy = current

    def test_matches_symbolic_lagrangian(self):
        t = sp.symbols('t')
        length, g, b_phi, b_tht = sp.symbols('L g beta_phi beta_theta', positive=True)
        phi, tht = sp.Function('phi')(t), sp.Function('theta_p')(t)
        pivot = sp.Matrix([sp.Function(name)(t) for name in ('p_x', 'p_y', 'p_z')])
        cable = sp.Matrix([sp.sin(tht), sp.sin(phi) * sp.cos(tht), -sp.cos(phi) * sp.cos(tht)])
        payload = pivot + length * cable
        velocity = payload.diff(t)
        lagrangian = velocity.dot(velocity) / 2 - g * payload[2]

        equations = [
            sp.diff(lagrangian.diff(q.diff(t)), t) - lagrangian.diff(q) + beta * q.diff(t)
            for q, beta in ((phi, b_phi), (tht, b_tht))
        ]

        acc = sp.symbols('a_x a_y a_z')
        vel = sp.symbols('v_x v_y v_z')
        q, qd, qdd = sp.symbols('q_phi q_tht'), sp.symbols('qd_phi qd_tht'), sp.symbols('qdd_phi qdd_tht')
        replacements = []
        for i in range(3):
            replacements.append((pivot[i].diff(t, 2), acc[i]))
            replacements.append((pivot[i].diff(t), vel[i]))
        for i, coord in enumerate((phi, tht)):
            replacements.append((coord.diff(t, 2), qdd[i]))
        for i, coord in enumerate((phi, tht)):
            replacements.append((coord.diff(t), qd[i]))
        for i, coord in enumerate((phi, tht)):
            replacements.append((coord, q[i]))
        for old, new in replacements:
            equations = [eq.subs(old, new) for eq in equations]

        solution = sp.solve(equations, list(qdd), dict=True)[0]
        accel = sp.lambdify((length, g, b_phi, b_tht, *acc, *vel, *q, *qd),
                            [solution[qdd[0]], solution[qdd[1]]], 'numpy')

        model = QuadPayload()
        rng = np.random.default_rng(3)
        for _ in range(20):
            theta = np.array([rng.uniform(0.3, 0.9), rng.uniform(0.0, 0.1), rng.uniform(0.0, 0.1)])
            x = np.concatenate([rng.normal(size=3), rng.uniform(-0.8, 0.8, 2), rng.normal(size=5)])
            u = rng.uniform(-5.0, 5.0, 3)
            expected = accel(theta[0], model.gravity, theta[1], theta[2], *u, *x[5:8], *x[3:5], *x[8:10])
            np.testing.assert_allclose(model.derivatives(x, u, theta)[8:10], expected, rtol=1e-9, atol=1e-9)

    def test_length_only_variant(self):
        model = get_model('quad_payload_length')
        self.assertEqual(model.descriptor.n_theta, 1)
        self.assertEqual(model.descriptor.param_labels, ('L',))
        x = np.zeros(10)
        x[4] = 0.3
        jac = model.param_jacobian(x, np.zeros(3), np.array([0.6]))
        self.assertEqual(jac.shape, (10, 1))
        full = QuadPayload()
        np.testing.assert_array_equal(
            model.step(x, np.zeros(3), np.array([0.6])),
            full.step(x, np.zeros(3), np.array([0.6, 0.0, 0.0])),
        )

    def test_payload_hangs_below_drone(self):
        model = QuadPayload()
        x = np.zeros(10)
        x[2] = 1.2
        np.testing.assert_allclose(model.payload_position(x, np.array([0.6, 0.0, 0.0])), [0.0, 0.0, 0.6])


class ScalarLinearTests(SimpleTestCase):

    def test_step_and_jacobian(self):
        model = ScalarLinear()
        x, u, theta = np.array([2.0]), np.array([0.5]), np.array([0.7])
        np.testing.assert_allclose(model.step(x, u, theta), [1.9])
        np.testing.assert_array_equal(model.param_jacobian(x, u, theta), [[2.0]])

    def test_jacobian_broadcasts_over_particles(self):
        model = ScalarLinear()
        thetas = np.linspace(-1.0, 1.0, 5)[:, None]
        jac = model.param_jacobian(np.array([3.0]), np.array([0.0]), thetas)
        np.testing.assert_array_equal(jac, np.full((5, 1, 1), 3.0))


class BatchRolloutTests(SimpleTestCase):

    def setUp(self):
        self.model = CartPole()
        self.x0 = np.array([0.5, 0.0, 0.05, 0.0])
        rng = np.random.default_rng(0)
        self.sequences = self.model.saturate(rng.normal(scale=3.0, size=(3, 6, 1)))
        self.params = np.array([[1.0, 0.1], [0.9, 0.11]])

    def test_matches_sequential_steps(self):
        states = self.model.batch_rollout(self.x0, self.sequences, self.params)
        self.assertEqual(states.shape, (3, 2, 7, 4))
        for m in range(3):
            for p in range(2):
                x = self.x0
                np.testing.assert_array_equal(states[m, p, 0], self.x0)
                for k in range(6):
                    x = self.model.step(x, self.sequences[m, k], self.params[p])
                    np.testing.assert_allclose(states[m, p, k + 1], x, rtol=0, atol=1e-15)

    def test_single_step_unrolled(self):
        states = self.model.batch_rollout(self.x0, self.sequences[:1, :1], self.params[:1])
        np.testing.assert_array_equal(states[0, 0, 0], self.x0)
        np.testing.assert_allclose(states[0, 0, 1], self.model.step(self.x0, self.sequences[0, 0], self.params[0]), atol=1e-15)

    def test_identical_sequences_and_params_give_identical_slices(self):
        sequences = np.repeat(self.sequences[:1], 2, axis=0)
        params = np.repeat(self.params[:1], 2, axis=0)
        states = self.model.batch_rollout(self.x0, sequences, params)
        np.testing.assert_array_equal(states[0], states[1])
        np.testing.assert_array_equal(states[:, 0], states[:, 1])

    def test_blowup_tagged_with_index(self):
        model = ScalarLinear()
        sequences = np.zeros((2, 5, 1))
        params = np.array([[0.5], [10.0]])
        x0 = np.array([1e308])
        with self.assertRaises(IntegrationBlowup) as ctx:
            model.batch_rollout(x0, sequences, params)
        self.assertEqual(ctx.exception.index, (0, 1, 0))

    def test_blowup_propagates_when_requested(self):
        model = ScalarLinear()
        states = model.batch_rollout(np.array([1e308]), np.zeros((1, 3, 1)), np.array([[10.0]]), on_blowup='propagate')
        self.assertFalse(np.all(np.isfinite(states)))


class RegistryTests(SimpleTestCase):

    def test_known_names(self):
        for name in ('cartpole', 'quad2d', 'quad_payload', 'quad_payload_length', 'scalar_linear'):
            self.assertEqual(get_model(name).name, name)

    def test_options_forwarded(self):
        self.assertEqual(get_model('cartpole', pole_half_length=0.25).pole_half_length, 0.25)

    def test_unknown_name(self):
        with self.assertRaises(ConfigurationError):
            get_model('acrobot')

    def test_bad_option(self):
        with self.assertRaises(ConfigurationError):
            get_model('cartpole', wheels=4)
