from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from apps.base.exceptions import ContractViolation, DegenerateBatch, InsufficientSamples
from apps.belief.estimators import PointEstimator, make_estimator
from apps.belief.types import NoiseModel
from apps.dynamics.base import ParamBox
from apps.dynamics.linear import ScalarLinear
from apps.mppi.controller import MPPIController, evaluate_rollouts
from apps.mppi.costs import QuadraticTrackingCost
from apps.mppi.sampling import NoiseConfig, time_shift
from apps.safety.sets import HeightBand, Unconstrained

from .controller import (
    ROBUST, ControllerConfig, ControllerState, PRMPPIController, control_step, nominal_cost, robust_cost,
)

TRACKING = QuadraticTrackingCost([1.0], [1e-3], terminal_scale=1.0)
UNIT_BAND = HeightBand(-1.0, 1.0, index=0)


def make_config(std=5.0, penalty=1e6, horizon=10, rollouts=200, parallel=False):
    return ControllerConfig(
        delta=0.1, samples=10, rollouts=rollouts, horizon=horizon, noise=NoiseConfig.from_std([std], beta=1.0),
        penalty=penalty, robust_beta=0.02, parallel_branches=parallel,
    )


class CostTests(SimpleTestCase):

    def setUp(self):
        self.cost = TRACKING.tracking(np.zeros((3, 1)))
        self.sequence = np.zeros((2, 1))
        self.expected = 1.0 + 0.25 + 1.0

    def states(self, values):
        return np.tile(np.asarray(values, dtype=float)[None, :, None], (10, 1, 1))

    def test_safe_rollouts_cost_expected_value(self):
        cost = nominal_cost(self.states([1.0, 0.5, 1.0]), self.sequence, self.cost, HeightBand(0.0, 5.0, index=0),
                            0.1, 1e6)
        self.assertAlmostEqual(cost, self.expected)

    def test_violation_adds_penalty(self):
        cost = nominal_cost(self.states([1.0, 0.5, 1.0]), self.sequence, self.cost, HeightBand(0.7, 5.0, index=0),
                            0.1, 1e6)
        self.assertAlmostEqual(cost, self.expected + 1e6)

    def test_zero_robustness_not_penalised(self):
        cost = nominal_cost(self.states([1.0, 0.5, 1.0]), self.sequence, self.cost, HeightBand(0.5, 5.0, index=0),
                            0.1, 1e6)
        self.assertAlmostEqual(cost, self.expected)

    def test_robust_cost_is_negated_robustness(self):
        self.assertEqual(robust_cost(np.full(10, -1.0), 0.1), -1.0)
        self.assertEqual(robust_cost(np.full(10, 0.3), 0.1), 0.3)
        scores = np.random.default_rng(0).normal(size=10)
        self.assertAlmostEqual(robust_cost(scores - 0.25, 0.1), robust_cost(scores, 0.1) - 0.25)


class ControllerConfigTests(SimpleTestCase):

    def test_rejects_insufficient_samples(self):
        with self.assertRaises(InsufficientSamples):
            ControllerConfig(0.1, 3, 10, 10, NoiseConfig.from_std([1.0], 1.0), 1e6, 0.02)

    def test_rejects_non_positive_penalty(self):
        with self.assertRaises(ContractViolation):
            ControllerConfig(0.1, 10, 10, 10, NoiseConfig.from_std([1.0], 1.0), 0.0, 0.02)

    def test_default_samples_from_delta(self):
        options = {'delta': 0.05, 'samples': None, 'rollouts': 10, 'horizon': 5, 'penalty': 1.0, 'robust_beta': 0.1}
        self.assertEqual(ControllerConfig.from_options(options, NoiseConfig.from_std([1.0], 1.0)).samples, 20)


class ControlStepTests(SimpleTestCase):

    def setUp(self):
        self.model = ScalarLinear()

    def closed_loop(self, controller, steps, seed, theta=1.5):
        rng = np.random.default_rng(seed)
        x, applied, diagnostics = np.array([5.0]), [], []
        for _ in range(steps):
            u, diag = controller.control_step(x, np.zeros((controller.steps + 1, 1)), rng)
            applied.append(u)
            diagnostics.append(diag)
            x = self.model.step(x, u, np.array([theta]))
        return np.array(applied), diagnostics

    def test_reduces_to_mppi_without_constraints(self):
        estimator = PointEstimator(self.model, [1.5])
        reference = MPPIController(self.model, TRACKING, NoiseConfig.from_std([5.0], beta=1.0), estimator,
                                   Unconstrained(), horizon=10, rollouts=200, delta=0.1, samples=10, penalty=1e6)
        for parallel in (False, True):
            controller = PRMPPIController(self.model, TRACKING, estimator, Unconstrained(), make_config(parallel=parallel))
            reference.reset()
            expected, _ = self.closed_loop(reference, 8, seed=11)
            applied, diagnostics = self.closed_loop(controller, 8, seed=11)
            self.assertEqual(applied.tobytes(), expected.tobytes())
            self.assertTrue(all(d.branch == 'nominal' and d.candidate == 1 for d in diagnostics))

    def test_robust_sequence_takes_over(self):
        # Cost pulls toward x = 5 outside |x| <= 1 and the penalty is negligible,
        # so the nominal candidates leave the safe set while the robust one stays.
        model = ScalarLinear(nominal_params=(1.0,))
        cost = TRACKING.tracking(np.full((5, 1), 5.0))
        ctrl = ControllerState(np.full((4, 1), 2.0), np.zeros((4, 1)))
        config = make_config(std=0.3, penalty=1e-6, horizon=5, rollouts=100)
        u, state, diagnostics = control_step(ctrl, PointEstimator(model, [1.0]), np.zeros(1), model, UNIT_BAND, cost,
                                             config, np.random.default_rng(0))
        self.assertEqual(diagnostics.branch, ROBUST)
        self.assertEqual(state.last_action_source, ROBUST)
        self.assertLessEqual(diagnostics.robustness_nominal, 0.0)
        self.assertGreater(diagnostics.robustness_robust, 0.0)
        np.testing.assert_array_equal(u, state.robust[0])
        np.testing.assert_array_equal(state.nominal, state.robust)

    def test_fallback_soundness(self):
        model = ScalarLinear(nominal_params=(1.0,))
        controller = PRMPPIController(model, TRACKING, PointEstimator(model, [1.0]), UNIT_BAND,
                                      make_config(std=0.3, penalty=1e-6, horizon=5, rollouts=100))
        rng = np.random.default_rng(1)
        x = np.zeros(1)
        for _ in range(15):
            u, diagnostics = controller.control_step(x, np.full((5, 1), 5.0), rng)
            if diagnostics.branch == 'nominal':
                self.assertGreater(diagnostics.robustness_nominal, 0.0)
            self.assertTrue(np.all(np.abs(u) <= 100.0))
            x = model.step(x, u, np.array([1.0]))

    def test_zero_noise_time_shift_consistency(self):
        sequence = np.linspace(-1.0, 1.0, 9)[:, None]
        ctrl = ControllerState(sequence, sequence.copy())
        config = make_config(std=0.0)
        estimator = PointEstimator(self.model, [0.5])
        cost = TRACKING.tracking(np.zeros((10, 1)))
        x = np.array([0.2])
        _, first, _ = control_step(ctrl, estimator, x, self.model, Unconstrained(), cost, config,
                                   np.random.default_rng(0))
        np.testing.assert_allclose(first.nominal, time_shift(sequence), rtol=1e-12, atol=1e-15)
        x = self.model.step(x, first.nominal[0], np.array([0.5]))
        _, second, _ = control_step(first, estimator, x, self.model, Unconstrained(), cost, config,
                                    np.random.default_rng(1))
        np.testing.assert_allclose(second.nominal, time_shift(first.nominal), rtol=1e-12, atol=1e-15)

    def test_parameter_samples_shared_within_step(self):
        estimator = make_estimator('svgd', self.model, NoiseModel.from_std([0.1]), ParamBox.from_pairs([[0.0, 2.0]]),
                                   {'particles': 20, 'kde_shrinkage': True, 'bandwidth_floor': 1e-4,
                                    'svgd_step': 1.0, 'svgd_iterations': 5}, np.random.default_rng(0))
        controller = PRMPPIController(self.model, TRACKING, estimator, UNIT_BAND, make_config(rollouts=20))
        with mock.patch('apps.prmppi.controller.evaluate_rollouts', wraps=evaluate_rollouts) as spy:
            _, diagnostics = controller.control_step(np.array([0.1]), np.zeros((10, 1)), np.random.default_rng(1))
        self.assertGreaterEqual(spy.call_count, 3)
        for call in spy.call_args_list:
            self.assertIs(call.args[3], diagnostics.params)

    def test_belief_is_not_mutated(self):
        estimator = make_estimator('svgd', self.model, NoiseModel.from_std([0.1]), ParamBox.from_pairs([[0.0, 2.0]]),
                                   {'particles': 20, 'kde_shrinkage': True, 'bandwidth_floor': 1e-4,
                                    'svgd_step': 1.0, 'svgd_iterations': 5}, np.random.default_rng(0))
        before = estimator.belief.particles.copy()
        controller = PRMPPIController(self.model, TRACKING, estimator, UNIT_BAND, make_config(rollouts=20))
        controller.control_step(np.array([0.1]), np.zeros((10, 1)), np.random.default_rng(2))
        np.testing.assert_array_equal(estimator.belief.particles, before)
        self.assertEqual(estimator.updates, 0)

    def test_everything_infeasible_is_degenerate(self):
        model = ScalarLinear(nominal_params=(10.0,))
        with self.assertRaises(DegenerateBatch):
            control_step(ControllerState.initial(4, 1), PointEstimator(model, [10.0]), np.array([1e308]), model,
                         Unconstrained(), TRACKING.tracking(np.zeros((5, 1))), make_config(horizon=5, rollouts=10),
                         np.random.default_rng(0))
