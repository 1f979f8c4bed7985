import numpy as np
from django.test import SimpleTestCase, tag
from hypothesis import given, settings, strategies as st

from apps.base.exceptions import ContractViolation, InsufficientSamples
from apps.dynamics.base import ParamBox
from apps.dynamics.cartpole import CartPole
from apps.dynamics.quad2d import PlanarQuadrotor
from apps.dynamics.quad_payload import QuadPayload

from .conformal import (
    batch_robustness, conformal_rank, default_samples, evaluate_sequences, minimum_samples, nonconformity,
    robustness,
)
from .sets import (
    CartpoleHalfPlane, HeightBand, ObstacleSet, SafeSet, SensedSafeSet, Unconstrained, box_signed_distance,
    make_safe_set,
)


class FirstCoordinate(SafeSet):
    description = 'h(x) = x_0'

    def margin(self, states, params=None):
        return np.asarray(states, dtype=float)[..., 0]


def column(values):
    return np.asarray(values, dtype=float)[:, None]


deltas = st.integers(min_value=1, max_value=99).map(lambda k: k / 100.0)
score_batches = st.lists(
    st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False), min_size=20, max_size=40,
)


class NonconformityTests(SimpleTestCase):

    def test_negated_minimum(self):
        self.assertEqual(nonconformity(column([1.0, 0.5, 2.0]), FirstCoordinate()), -0.5)

    def test_violation_is_positive(self):
        self.assertAlmostEqual(nonconformity(column([0.3, -0.2, 0.1]), FirstCoordinate()), 0.2)

    def test_constant_margin(self):
        self.assertEqual(nonconformity(column([0.7] * 5), FirstCoordinate()), -0.7)

    def test_initial_state_counts(self):
        self.assertEqual(nonconformity(column([-1.0, 2.0, 2.0]), FirstCoordinate()), 1.0)

    def test_non_finite_state_scores_infinity(self):
        trajectory = np.array([[1.0, 0.0], [np.nan, 0.0], [1.0, 0.0]])
        self.assertEqual(nonconformity(trajectory, Unconstrained()), np.inf)

    def test_batched(self):
        trajectories = np.stack([column([1.0, 0.5]), column([2.0, -3.0])])
        np.testing.assert_array_equal(nonconformity(trajectories, FirstCoordinate()), [-0.5, 3.0])


class ConformalRankTests(SimpleTestCase):

    def test_rank_table(self):
        self.assertEqual(conformal_rank(10, 0.1), 10)
        self.assertEqual(conformal_rank(5, 0.2), 5)
        self.assertEqual(conformal_rank(20, 0.05), 20)
        self.assertEqual(conformal_rank(100, 0.01), 100)
        self.assertEqual(conformal_rank(9, 0.1), 9)

    def test_too_few_samples(self):
        with self.assertRaises(InsufficientSamples) as ctx:
            conformal_rank(3, 0.1)
        self.assertEqual(ctx.exception.minimum, 9)
        self.assertIn('P >= ceil((1 - delta) / delta) = 9', str(ctx.exception))

    def test_sample_counts(self):
        self.assertEqual(default_samples(0.1), 10)
        self.assertEqual(default_samples(0.2), 5)
        self.assertEqual(default_samples(0.05), 20)
        self.assertEqual(minimum_samples(0.1), 9)

    def test_invalid_arguments(self):
        with self.assertRaises(ContractViolation):
            conformal_rank(10, 1.0)
        with self.assertRaises(ContractViolation):
            conformal_rank(0, 0.1)

    @given(samples=st.integers(min_value=1, max_value=300), delta=deltas)
    @settings(max_examples=300, deadline=None)
    def test_error_exactly_below_minimum(self, samples, delta):
        if samples >= minimum_samples(delta):
            self.assertLessEqual(conformal_rank(samples, delta), samples)
        else:
            with self.assertRaises(InsufficientSamples):
                conformal_rank(samples, delta)


class RobustnessTests(SimpleTestCase):

    def test_uniformly_safe(self):
        verdict = robustness(np.full(10, -1.0), 0.1)
        self.assertEqual(verdict.robustness, 1.0)
        self.assertTrue(verdict.certified)
        self.assertEqual(verdict.rank, 10)

    def test_uniformly_unsafe(self):
        verdict = robustness(np.full(10, 0.3), 0.1)
        self.assertEqual(verdict.robustness, -0.3)
        self.assertFalse(verdict.certified)

    def test_zero_is_not_certified(self):
        self.assertFalse(robustness(np.zeros(10), 0.1).certified)

    def test_picks_order_statistic(self):
        scores = np.array([0.5, -2.0, -1.0, -3.0, 0.1])
        verdict = robustness(scores, 0.2)
        np.testing.assert_array_equal(verdict.scores, np.sort(scores))
        self.assertEqual(verdict.robustness, -0.5)
        self.assertEqual(robustness(scores, 0.5).robustness, 1.0)

    def test_nan_counts_as_unsafe(self):
        self.assertEqual(robustness(np.array([-1.0] * 9 + [np.nan]), 0.1).robustness, -np.inf)

    @given(scores=score_batches, first=deltas, second=deltas)
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_delta(self, scores, first, second):
        loose, strict = max(first, second), min(first, second)
        if len(scores) < minimum_samples(strict):
            return
        self.assertLessEqual(robustness(scores, strict).robustness, robustness(scores, loose).robustness)

    @given(scores=score_batches, seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariant(self, scores, seed):
        permuted = np.random.default_rng(seed).permutation(scores)
        self.assertEqual(robustness(scores, 0.1).robustness, robustness(permuted, 0.1).robustness)

    def test_batch_matches_rows(self):
        scores = np.random.default_rng(0).normal(size=(6, 10))
        expected = [robustness(row, 0.1).robustness for row in scores]
        np.testing.assert_array_equal(batch_robustness(scores, 0.1), expected)


class SafeSetTests(SimpleTestCase):

    def test_cartpole_half_plane(self):
        safe_set = CartpoleHalfPlane(pole_length=1.0)
        self.assertEqual(safe_set.margin(np.array([0.5, 0.0, 0.0, 0.0])), 0.5)
        self.assertAlmostEqual(safe_set.margin(np.array([0.5, 0.0, -np.pi / 2, 0.0])), -0.5)

    def test_height_band(self):
        band = HeightBand(0.6, 1.6)
        np.testing.assert_allclose(band.margin(np.array([[0.0, 1.0], [0.0, 0.5], [0.0, 1.5]])), [0.4, -0.1, 0.1])

    def test_box_signed_distance(self):
        low, high = np.zeros(3), np.ones(3)
        self.assertAlmostEqual(box_signed_distance(np.array([2.0, 0.5, 0.5]), low, high), 1.0)
        self.assertAlmostEqual(box_signed_distance(np.array([2.0, 2.0, 0.5]), low, high), np.sqrt(2.0))
        self.assertAlmostEqual(box_signed_distance(np.array([0.5, 0.5, 0.9]), low, high), -0.1)

    def test_payload_hits_floor_before_drone(self):
        model = QuadPayload()
        safe_set = ObstacleSet([[[5.0, 5.0, 5.0], [6.0, 6.0, 6.0]]], clearance=0.0, floor=0.0, model=model)
        state = np.zeros(10)
        state[2] = 0.5
        self.assertAlmostEqual(safe_set.margin(state, np.array([0.3, 0.0, 0.0])), 0.2)
        self.assertAlmostEqual(safe_set.margin(state, np.array([0.8, 0.0, 0.0])), -0.3)
        with self.assertRaises(ContractViolation):
            safe_set.margin(state)

    def test_sensed_set_reveals_near_boundary(self):
        sensed = SensedSafeSet(HeightBand(0.6, 1.6), radius=0.4)
        far, near = np.array([0.0, 1.1]), np.array([0.0, 0.9])
        self.assertIsInstance(sensed.nominal_view(far), Unconstrained)
        self.assertIsInstance(sensed.nominal_view(near), HeightBand)
        self.assertAlmostEqual(sensed.margin(far), 0.5)
        self.assertAlmostEqual(sensed.margin(np.array([0.0, 0.5])), -0.1)

    def test_make_safe_set(self):
        self.assertIsInstance(make_safe_set({'kind': 'cartpole_half_plane'}, CartPole()), CartpoleHalfPlane)
        self.assertIsInstance(make_safe_set({'kind': 'height_band', 'z_min': 0.6, 'z_max': 1.6}, None), HeightBand)


class EvaluateSequencesTests(SimpleTestCase):

    def setUp(self):
        self.model = PlanarQuadrotor()
        self.hover = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
        self.params = ParamBox.from_pairs([[0.0135, 0.0405], [0.7e-5, 2.1e-5]]).sample(10, np.random.default_rng(0))

    def test_unconstrained_is_always_certified(self):
        sequences = np.random.default_rng(1).normal(0.0, 0.01, size=(4, 20, 2))
        verdicts, states = evaluate_sequences(self.model, self.hover, sequences, self.params, Unconstrained(1e6), 0.1)
        self.assertEqual(states.shape, (4, 10, 21, 6))
        for verdict in verdicts:
            self.assertTrue(verdict.certified)
            self.assertEqual(verdict.robustness, 1e6)

    def test_point_belief_gives_deterministic_margin(self):
        model = CartPole()
        x0 = np.array([0.5, 0.0, 0.05, 0.0])
        sequence = np.full((1, 30, 1), -2.0)
        params = np.tile([1.0, 0.1], (10, 1))
        safe_set = CartpoleHalfPlane(model.pole_length)
        verdicts, _ = evaluate_sequences(model, x0, sequence, params, safe_set, 0.1)

        x, margins = x0, [safe_set.margin(x0)]
        for u in sequence[0]:
            x = model.step(x, u, params[0])
            margins.append(safe_set.margin(x))
        self.assertAlmostEqual(verdicts[0].robustness, min(margins), places=12)

    def test_full_descent_is_not_certified(self):
        band = HeightBand(0.6, 1.6)
        descent = np.tile(self.model.descriptor.u_low, (1, 49, 1))
        for delta in (0.5, 0.2, 0.1, 0.05):
            params = self.params if default_samples(delta) == 10 else ParamBox.from_pairs(
                [[0.0135, 0.0405], [0.7e-5, 2.1e-5]]).sample(default_samples(delta), np.random.default_rng(2))
            verdicts, states = evaluate_sequences(self.model, self.hover, descent, params, band, delta)
            self.assertFalse(verdicts[0].certified)
            self.assertTrue(np.all(states[0, :, -1, 1] < 0.6))

    @tag('slow')
    def test_monte_carlo_coverage(self):
        # theta* and the calibration samples share the prior; constant thrusts
        # sweep from certainly unsafe through certainly safe.
        rng = np.random.default_rng(2024)
        box = ParamBox.from_pairs([[0.0135, 0.0405], [0.7e-5, 2.1e-5]])
        band = HeightBand(0.6, 1.6)
        hover = self.model.hover_thrust
        certified = safe_when_certified = covered = 0
        repetitions = 2000
        for _ in range(repetitions):
            thrust = rng.uniform(0.0, 0.3)
            sequence = np.full((1, 15, 2), thrust - hover)
            params = box.sample(11, rng)
            verdicts, states = evaluate_sequences(self.model, self.hover, sequence, params[:10], band, 0.1)
            true_score = nonconformity(
                self.model.batch_rollout(self.hover, sequence, params[10:])[0, 0], band)
            covered += true_score <= -verdicts[0].robustness
            if verdicts[0].certified:
                certified += 1
                safe_when_certified += true_score <= 0.0
        self.assertGreater(certified, 200)
        self.assertGreaterEqual(safe_when_certified / certified, 0.87)
        self.assertGreaterEqual(covered / repetitions, 0.87)
