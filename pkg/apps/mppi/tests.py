import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from apps.base.exceptions import ContractViolation, DegenerateBatch, InsufficientSamples
from apps.belief.estimators import PointEstimator
from apps.dynamics.linear import ScalarLinear
from apps.safety.sets import Unconstrained

from .controller import MPPIController
from .costs import QuadraticTrackingCost, expected_cost, penalized_cost, trajectory_costs
from .sampling import NoiseConfig, importance_weights, sample_perturbations, time_shift, weighted_update

cost_batches = st.lists(
    st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False), min_size=1, max_size=50,
)
temperatures = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


class NoiseTests(SimpleTestCase):

    def test_zero_covariance_gives_zero_perturbations(self):
        noise = NoiseConfig(np.zeros((2, 2)), beta=1.0)
        np.testing.assert_array_equal(sample_perturbations(noise, 5, 4, np.random.default_rng(0)), np.zeros((5, 4, 2)))

    def test_vanishing_covariance_limit(self):
        noise = NoiseConfig.from_std([1e-150], beta=1.0)
        draws = sample_perturbations(noise, 100, 10, np.random.default_rng(0))
        self.assertLess(np.max(np.abs(draws)), 1e-140)

    def test_empirical_covariance(self):
        covariance = np.array([[1.0, 0.3], [0.3, 0.5]])
        draws = sample_perturbations(NoiseConfig(covariance, beta=1.0), 100_000, 1, np.random.default_rng(1))[:, 0]
        empirical = np.cov(draws, rowvar=False)
        # Standard error of a sample covariance entry: sqrt((S_ij^2 + S_ii S_jj) / n).
        standard_error = np.sqrt((covariance ** 2 + np.outer(np.diag(covariance), np.diag(covariance))) / draws.shape[0])
        self.assertTrue(np.all(np.abs(empirical - covariance) < 3 * standard_error))
        self.assertTrue(np.all(np.abs(draws.mean(axis=0)) < 3 * np.sqrt(np.diag(covariance) / draws.shape[0])))

    def test_seed_determinism(self):
        noise = NoiseConfig.from_std([0.5, 2.0], beta=1.0)
        first = sample_perturbations(noise, 20, 7, np.random.default_rng(3))
        second = sample_perturbations(noise, 20, 7, np.random.default_rng(3))
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_invalid_configuration(self):
        with self.assertRaises(ContractViolation):
            NoiseConfig(np.array([[1.0, 2.0], [2.0, 1.0]]), beta=1.0)
        with self.assertRaises(ContractViolation):
            NoiseConfig.from_std([1.0], beta=0.0)


class ImportanceWeightTests(SimpleTestCase):

    def test_equal_costs_are_uniform(self):
        np.testing.assert_allclose(importance_weights([4.2, 4.2, 4.2], 1.0), [1 / 3, 1 / 3, 1 / 3])

    def test_shift_invariance_is_exact(self):
        costs = np.array([3.0, 7.0, 4.0, 12.0])
        self.assertEqual(importance_weights(costs, 2.0).tobytes(), importance_weights(costs + 1024.0, 2.0).tobytes())

    def test_one_hot_limit(self):
        np.testing.assert_array_equal(importance_weights([2.0, 1.0, 3.0], 1e-6), [0.0, 1.0, 0.0])

    def test_infinite_costs_get_zero_weight(self):
        weights = importance_weights([np.inf, 1.0, np.nan, 1.0], 1.0)
        np.testing.assert_array_equal(weights, [0.0, 0.5, 0.0, 0.5])

    def test_all_infinite_is_degenerate(self):
        with self.assertRaises(DegenerateBatch):
            importance_weights([np.inf, np.inf], 1.0)

    @given(costs=cost_batches, beta=temperatures)
    @settings(max_examples=200, deadline=None)
    def test_normalised_and_non_negative(self, costs, beta):
        weights = importance_weights(costs, beta)
        self.assertAlmostEqual(weights.sum(), 1.0, delta=1e-9)
        self.assertTrue(np.all(weights >= 0.0))

    @given(costs=cost_batches, first=temperatures, second=temperatures)
    @settings(max_examples=200, deadline=None)
    def test_colder_temperature_concentrates(self, costs, first, second):
        costs = np.asarray(costs)
        best = int(np.argmin(costs))
        if np.sum(costs == costs[best]) > 1:
            return
        cold, warm = min(first, second), max(first, second)
        self.assertGreaterEqual(importance_weights(costs, cold)[best], importance_weights(costs, warm)[best] - 1e-15)


class WeightedUpdateTests(SimpleTestCase):

    def setUp(self):
        self.sequences = np.random.default_rng(4).normal(size=(30, 8, 2))

    def test_one_hot_returns_sequence(self):
        weights = np.zeros(30)
        weights[7] = 1.0
        np.testing.assert_array_equal(weighted_update(self.sequences, weights), self.sequences[7])

    def test_identical_sequences(self):
        sequences = np.tile(self.sequences[:1], (5, 1, 1))
        weights = np.random.default_rng(5).dirichlet(np.ones(5))
        np.testing.assert_allclose(weighted_update(sequences, weights), sequences[0], rtol=1e-12)

    def test_within_envelope(self):
        weights = np.random.default_rng(6).dirichlet(np.ones(30))
        update = weighted_update(self.sequences, weights)
        self.assertTrue(np.all(update >= self.sequences.min(axis=0) - 1e-12))
        self.assertTrue(np.all(update <= self.sequences.max(axis=0) + 1e-12))

    def test_permutation_equivariant(self):
        weights = np.random.default_rng(7).dirichlet(np.ones(30))
        order = np.random.default_rng(8).permutation(30)
        np.testing.assert_allclose(weighted_update(self.sequences[order], weights[order]),
                                   weighted_update(self.sequences, weights), rtol=1e-12, atol=1e-14)

    def test_saturates_after_averaging(self):
        update = weighted_update(np.full((2, 3, 1), 5.0), np.array([0.5, 0.5]), u_low=-1.0, u_high=1.0)
        np.testing.assert_array_equal(update, np.ones((3, 1)))

    def test_weight_count_checked(self):
        with self.assertRaises(ContractViolation):
            weighted_update(self.sequences, np.ones(3) / 3)


class TimeShiftTests(SimpleTestCase):

    def test_repeats_last_control(self):
        np.testing.assert_array_equal(time_shift(np.array([[0.0], [1.0], [2.0]])), [[1.0], [2.0], [2.0]])

    def test_constant_and_zero_sequences_unchanged(self):
        constant = np.full((4, 2), 0.7)
        np.testing.assert_array_equal(time_shift(constant), constant)
        np.testing.assert_array_equal(time_shift(np.zeros((4, 2))), np.zeros((4, 2)))


class ExpectedCostTests(SimpleTestCase):

    def setUp(self):
        self.model = ScalarLinear()

    def test_hand_unrolled_two_steps(self):
        sequences = np.array([[[1.0], [-2.0]]])
        states = self.model.batch_rollout(np.array([3.0]), sequences, np.array([[0.5]]))
        # x: 3 -> 2.5 -> -0.75 with l = x^2 + u^2 and L = 2 x^2.
        cost = expected_cost(states, sequences,
                             lambda x, u: x[..., 0] ** 2 + u[..., 0] ** 2,
                             lambda x: 2.0 * x[..., 0] ** 2)
        self.assertAlmostEqual(cost[0], 9.0 + 1.0 + 6.25 + 4.0 + 2.0 * 0.5625)

    def test_constant_terminal_cost(self):
        sequences = np.random.default_rng(0).normal(size=(4, 5, 1))
        states = self.model.batch_rollout(np.array([1.0]), sequences, np.array([[0.5], [0.9]]))
        cost = expected_cost(states, sequences, lambda x, u: np.zeros(x.shape[:-1]), lambda x: np.full(x.shape[:-1], 3.5))
        np.testing.assert_array_equal(cost, np.full(4, 3.5))

    def test_quadratic_tracking_matches_independent_sum(self):
        rng = np.random.default_rng(1)
        sequences = rng.normal(size=(3, 6, 1))
        params = np.array([[0.5], [0.8], [1.1]])
        reference = rng.normal(size=(7, 1))
        cost = QuadraticTrackingCost([2.0], [0.1], terminal_scale=4.0).tracking(reference)
        states = self.model.batch_rollout(np.array([0.4]), sequences, params)

        expected = np.zeros(3)
        for m in range(3):
            for a in params[:, 0]:
                x, total = 0.4, 0.0
                for k in range(6):
                    u = sequences[m, k, 0]
                    total += 2.0 * (x - reference[k, 0]) ** 2 + 0.1 * u ** 2
                    x = a * x + u
                total += 4.0 * 2.0 * (x - reference[6, 0]) ** 2
                expected[m] += total / 3
        np.testing.assert_allclose(expected_cost(states, sequences, cost.stage, cost.terminal), expected, rtol=1e-9)

    def test_non_finite_rollout_costs_infinity(self):
        sequences = np.zeros((2, 3, 1))
        states = self.model.batch_rollout(np.array([1.0]), sequences, np.array([[0.5]]))
        states[1, 0, 2, 0] = np.nan
        cost = QuadraticTrackingCost([1.0], [1.0]).tracking(np.zeros((4, 1)))
        result = expected_cost(states, sequences, cost.stage, cost.terminal)
        self.assertTrue(np.isfinite(result[0]))
        self.assertEqual(result[1], np.inf)

    def test_shape_mismatch_rejected(self):
        with self.assertRaises(ContractViolation):
            trajectory_costs(np.zeros((2, 1, 4, 1)), np.zeros((2, 2, 1)), None, None)

    def test_penalty_indicator_is_strict(self):
        np.testing.assert_array_equal(penalized_cost([1.0, 1.0, 1.0], [0.5, 0.0, -0.1], 100.0), [1.0, 1.0, 101.0])

    def test_missing_reference(self):
        with self.assertRaises(ContractViolation):
            QuadraticTrackingCost([1.0], [1.0]).stage(np.zeros((1, 1, 2, 1)), np.zeros((1, 1, 2, 1)))


class MPPIControllerTests(SimpleTestCase):

    def make_controller(self, theta=1.5):
        model = ScalarLinear()
        return MPPIController(
            model=model,
            cost=QuadraticTrackingCost([1.0], [1e-3], terminal_scale=1.0),
            noise=NoiseConfig.from_std([5.0], beta=1.0),
            estimator=PointEstimator(model, [theta]),
            safe_set=Unconstrained(),
            horizon=10,
            rollouts=200,
            delta=0.1,
            samples=10,
            penalty=1e6,
        )

    def run_closed_loop(self, controller, steps, seed):
        rng = np.random.default_rng(seed)
        x, applied = np.array([5.0]), []
        for _ in range(steps):
            u, diagnostics = controller.control_step(x, np.zeros((10, 1)), rng)
            applied.append(u)
            x = controller.model.step(x, u, np.array([1.5]))
        return x, np.array(applied), diagnostics

    def test_stabilises_unstable_system(self):
        x, _, diagnostics = self.run_closed_loop(self.make_controller(), 15, seed=0)
        self.assertLess(abs(x[0]), 1.0)
        self.assertEqual(diagnostics.branch, 'nominal')
        self.assertGreater(diagnostics.robustness_nominal, 0.0)

    def test_seed_determinism(self):
        _, first, _ = self.run_closed_loop(self.make_controller(), 5, seed=3)
        _, second, _ = self.run_closed_loop(self.make_controller(), 5, seed=3)
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_applied_controls_respect_bounds(self):
        _, applied, _ = self.run_closed_loop(self.make_controller(), 5, seed=4)
        self.assertTrue(np.all(np.abs(applied) <= 100.0))

    def test_rejects_too_few_samples(self):
        model = ScalarLinear()
        with self.assertRaises(InsufficientSamples):
            MPPIController(model, QuadraticTrackingCost([1.0], [1.0]), NoiseConfig.from_std([1.0], 1.0),
                           PointEstimator(model, [0.5]), Unconstrained(), 10, 20, 0.1, 3, 1e6)
