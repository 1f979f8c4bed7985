import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, tag
from hypothesis import given, settings, strategies as st

from apps.base.exceptions import ConfigurationError, ContractViolation
from apps.safety.sets import SensedSafeSet

from .environments import make_environment
from .episode import TrialRecord, run_episode
from .metrics import compute_pa, compute_rmse, summarize_records
from .services import BenchmarkService, BenchmarkSpec
from .signals import lap_completed

SHORT = {'episode_length': 5, 'laps': 2}
FAST_CONTROLLER = {'rollouts': 20, 'horizon': 5}
FAST_BELIEF = {'particles': 20, 'svgd_iterations': 2}

positive_params = st.lists(st.floats(min_value=0.1, max_value=10.0), min_size=1, max_size=4)


def make_record(seed, rmse, success=True, learns=True, pa=95.0, variant='prmppi'):
    return TrialRecord(
        environment='quad2d', variant=variant, seed=seed, true_params=[0.027, 1.4e-5], learns=learns,
        rmse=rmse, lap_rmse=[rmse, rmse], pa_trace=[pa, pa] if learns else [],
        violations=0 if success else 2, branch_counts={'nominal': 10, 'robust': 0 if success else 3},
    )


class EnvironmentTests(SimpleTestCase):

    def test_cartpole_prior_is_ten_percent_box(self):
        env = make_environment('cartpole')
        np.testing.assert_allclose(env.prior.low, [0.9, 0.09])
        np.testing.assert_allclose(env.prior.high, [1.1, 0.11])
        np.testing.assert_array_equal(env.initial_state, [1.0, 0.0, 0.0, 0.0])

    def test_quadrotor_prior_is_fifty_percent_box(self):
        env = make_environment('quad2d')
        np.testing.assert_allclose(env.prior.low, [0.0135, 0.7e-5])
        np.testing.assert_allclose(env.prior.high, [0.0405, 2.1e-5])

    def test_override_is_respected(self):
        self.assertEqual(make_environment('cartpole', {'episode_length': 17}).episode_length, 17)
        env = make_environment('quad2d', {'reference': {'radius': 0.3}})
        self.assertEqual(env.reference.radius, 0.3)
        self.assertEqual(env.reference.center.tolist(), [0.0, 1.0])

    def test_unknown_environment(self):
        with self.assertRaises(ConfigurationError):
            make_environment('mountain_car')

    def test_prior_outside_model_bounds_rejected(self):
        with self.assertRaises(ConfigurationError):
            make_environment('cartpole', {'prior_box': [[0.1, 1.1], [0.09, 0.11]]})

    def test_partial_variant_senses_constraint(self):
        env = make_environment('quad2d_partial')
        self.assertIsInstance(env.safe_set, SensedSafeSet)
        self.assertEqual(env.safe_set.radius, 0.4)
        self.assertEqual(env.episode_length, make_environment('quad2d').episode_length)

    def test_payload_priors(self):
        env = make_environment('quad_payload')
        np.testing.assert_allclose(env.prior.low, [0.3, 0.0, 0.0])
        np.testing.assert_allclose(env.prior.high, [0.9, 0.1, 0.1])
        self.assertEqual(make_environment('quad_payload_length').prior.dim, 1)

    def test_circle_starts_on_reference_and_dips_below_band(self):
        env = make_environment('quad2d')
        window = env.reference_window(0, 9)
        self.assertEqual(window.shape, (10, 6))
        np.testing.assert_allclose(window[0], env.initial_state)
        lap = env.lap_reference()
        self.assertEqual(lap.shape, (env.episode_length + 1, 6))
        self.assertAlmostEqual(lap[:, 1].min(), 0.5, places=3)
        np.testing.assert_allclose(lap[-1, :2], lap[0, :2], atol=1e-12)

    def test_square_visits_corners(self):
        env = make_environment('quad_payload')
        corners = env.reference.states(np.array([0.0, 3.0, 6.0, 9.0, 12.0]))
        np.testing.assert_allclose(corners[:, :3], [
            [0.0, 0.0, 1.2], [1.5, 0.0, 1.2], [1.5, 1.5, 1.2], [0.0, 1.5, 1.2], [0.0, 0.0, 1.2],
        ], atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(corners[:, 5:8], axis=1), 0.5)

    def test_initial_state_is_safe(self):
        for name in ('cartpole', 'quad2d', 'quad_payload'):
            env = make_environment(name)
            self.assertGreaterEqual(float(env.safe_set.margin(env.initial_state, env.model.descriptor.nominal_params)),
                                    0.0, name)


class MetricsTests(SimpleTestCase):

    def test_rmse_of_identical_trajectories(self):
        trajectory = np.random.default_rng(0).normal(size=(20, 4))
        self.assertEqual(compute_rmse(trajectory, trajectory), 0.0)

    def test_rmse_of_constant_offset(self):
        reference = np.zeros((30, 4))
        trajectory = reference.copy()
        trajectory[:, 0] += 0.25
        trajectory[:, 2] += 7.0
        self.assertAlmostEqual(compute_rmse(trajectory, reference, position_indices=[0, 1]), 0.25)

    def test_rmse_matches_streaming_accumulation(self):
        rng = np.random.default_rng(1)
        trajectory, reference = rng.normal(size=(200, 3)), rng.normal(size=(200, 3))
        total = 0.0
        for row, target in zip(trajectory, reference):
            total += sum((a - b) ** 2 for a, b in zip(row, target))
        self.assertAlmostEqual(compute_rmse(trajectory, reference), np.sqrt(total / 200), delta=1e-12)

    def test_rmse_needs_aligned_inputs(self):
        with self.assertRaises(ContractViolation):
            compute_rmse(np.zeros((5, 2)), np.zeros((6, 2)))

    def test_parameter_accuracy(self):
        theta = np.array([0.027, 1.4e-5])
        self.assertEqual(compute_pa(theta, theta), 100.0)
        self.assertAlmostEqual(compute_pa([1.1], [1.0]), 90.0)
        self.assertEqual(compute_pa(3.0 * theta, theta), 0.0)

    def test_zero_component_is_excluded(self):
        with self.assertLogs('apps.simlab.metrics', 'WARNING'):
            self.assertAlmostEqual(compute_pa([0.66, 0.05, 0.02], [0.6, 0.0, 0.02]), 95.0)

    @given(positive_params, st.data(), st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=100, deadline=None)
    def test_moving_toward_truth_never_lowers_accuracy(self, truth, data, fraction):
        truth = np.array(truth)
        estimate = np.array(data.draw(st.lists(st.floats(min_value=0.0, max_value=20.0),
                                               min_size=truth.size, max_size=truth.size)))
        closer = truth + fraction * (estimate - truth)
        self.assertGreaterEqual(compute_pa(closer, truth), compute_pa(estimate, truth) - 1e-9)

    def test_summary_of_constant_records(self):
        summary = summarize_records([make_record(seed, 0.2) for seed in range(4)])
        self.assertAlmostEqual(summary['rmse']['mean'], 0.2)
        self.assertEqual(summary['rmse']['std'], 0.0)
        self.assertEqual(summary['table']['SR'], '4/4')
        self.assertEqual(summary['pa']['mean'], 95.0)
        self.assertEqual(len(summary['laps']), 2)

    def test_summary_is_permutation_invariant(self):
        records = [make_record(seed, 0.1 * seed, success=seed % 2 == 0) for seed in range(6)]
        first = summarize_records(records)
        second = summarize_records(list(reversed(records)))
        self.assertEqual(first, second)
        self.assertEqual(first['success'], {'successes': 3, 'trials': 6})
        self.assertEqual(first['fallbacks'], 9)

    def test_no_accuracy_for_fixed_parameter_variants(self):
        summary = summarize_records([make_record(0, 0.15, learns=False, variant='oracle')])
        self.assertNotIn('pa', summary)
        self.assertEqual(set(summary['table']), {'RMSE', 'SR'})

    def test_empty_summary_rejected(self):
        with self.assertRaises(ContractViolation):
            summarize_records([])


class EpisodeTests(SimpleTestCase):

    def setUp(self):
        self.env = make_environment('quad2d', SHORT)

    def run_variant(self, variant, seed=3):
        return run_episode(self.env, variant, seed, FAST_CONTROLLER, FAST_BELIEF)

    def test_oracle_never_learns(self):
        result = self.run_variant('oracle')
        record = result.record
        self.assertEqual(record.status, 'completed')
        self.assertEqual(record.belief_updates, 0)
        self.assertEqual(record.pa_trace, [])
        self.assertFalse(record.learns)
        self.assertEqual(len(result.steps), 10)
        self.assertEqual(record.branch_counts['robust'], 0)

    def test_prmppi_updates_belief_within_laps(self):
        result = self.run_variant('prmppi')
        record = result.record
        self.assertEqual(record.belief_updates, 2 * (5 - 1))
        self.assertEqual(len(record.pa_trace), 2)
        self.assertTrue(all(0.0 <= pa <= 100.0 for pa in record.pa_trace))
        self.assertEqual(len(result.beliefs), 3)
        self.assertEqual(len(result.beliefs[0]), 20)
        self.assertEqual(sum(record.branch_counts.values()), record.steps)

    def test_trial_is_deterministic(self):
        first, second = self.run_variant('prmppi-ukf'), self.run_variant('prmppi-ukf')
        pd.testing.assert_frame_equal(first.steps, second.steps)
        self.assertEqual(first.record.pa_trace, second.record.pa_trace)
        self.assertEqual(first.record.rmse, second.record.rmse)

    def test_variants_share_the_randomised_system(self):
        oracle, learner = self.run_variant('oracle', seed=9), self.run_variant('prmppi-sir', seed=9)
        self.assertEqual(oracle.record.true_params, learner.record.true_params)
        self.assertTrue(make_environment('quad2d').prior.contains(oracle.record.true_params))

    def test_lap_signal_sent_per_lap(self):
        laps = []

        def collect(sender, lap, **kwargs):
            laps.append(lap)

        lap_completed.connect(collect)
        try:
            self.run_variant('nominal')
        finally:
            lap_completed.disconnect(collect)
        self.assertEqual(laps, [1, 2])

    def test_divergence_ends_trial_as_failure(self):
        env = make_environment('cartpole', {**SHORT, 'state_limits': [0.5, 20.0, 1.5, 50.0]})
        result = run_episode(env, 'robust', 0, FAST_CONTROLLER)
        self.assertEqual(result.record.status, 'diverged')
        self.assertFalse(result.record.success)
        self.assertEqual(len(result.record.lap_rmse), 1)
        self.assertEqual(len(result.steps), 1)

    def test_success_matches_violations(self):
        record = self.run_variant('robust').record
        self.assertEqual(record.success, record.violations == 0)

    def test_unknown_variant(self):
        with self.assertRaises(ConfigurationError):
            run_episode(self.env, 'gpmpc', 0)


class BenchmarkServiceTests(SimpleTestCase):

    def spec(self, **kwargs):
        options = {
            'environment': 'quad2d', 'variant': 'prmppi', 'trials': 2, 'base_seed': 7,
            'environment_overrides': SHORT, 'controller_overrides': FAST_CONTROLLER, 'belief_overrides': FAST_BELIEF,
        }
        options.update(kwargs)
        return BenchmarkSpec(**options)

    def test_single_trial_reproduces_episode(self):
        result = BenchmarkService.run_benchmark(self.spec(trials=1), workers=1, backend='process')
        episode = run_episode(make_environment('quad2d', SHORT), 'prmppi', 7, FAST_CONTROLLER, FAST_BELIEF)
        pd.testing.assert_frame_equal(result.results[0].steps, episode.steps)
        self.assertEqual(result.records[0].rmse, episode.record.rmse)

    def test_failed_trials_do_not_abort_batch(self):
        result = BenchmarkService.run_benchmark(self.spec(controller_overrides={**FAST_CONTROLLER, 'samples': 3}),
                                                workers=1, backend='process')
        self.assertEqual([record.status for record in result.records], ['failed', 'failed'])
        self.assertEqual(result.summary()['table']['SR'], '0/2')

    def test_unknown_environment_fails_fast(self):
        with self.assertRaises(ConfigurationError):
            BenchmarkService.run_benchmark(self.spec(environment='pendulum'), workers=1)

    def test_celery_group_matches_process_run(self):
        spec = self.spec(variant='oracle')
        local = BenchmarkService.run_benchmark(spec, workers=1, backend='process')
        remote = BenchmarkService.run_benchmark(spec, workers=1, backend='celery')
        self.assertEqual([r.seed for r in remote.records], [7, 8])
        for first, second in zip(local.results, remote.results):
            pd.testing.assert_frame_equal(first.steps, second.steps, check_dtype=False)
            self.assertEqual(first.record.rmse, second.record.rmse)

    def test_outputs_are_reproducible(self):
        spec = self.spec(variant='prmppi-ukf')
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            for directory in (first, second):
                BenchmarkService.write_outputs(BenchmarkService.run_benchmark(spec, workers=1), directory)
            names = sorted(path.name for path in Path(first).iterdir())
            self.assertIn('summary.json', names)
            self.assertIn('timings.json', names)
            self.assertIn('trial_7.csv', names)
            self.assertIn('belief_8_lap2.csv', names)
            for name in names:
                if name != 'timings.json':
                    self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes(), name)


@tag('slow')
class BenchmarkAcceptanceTests(SimpleTestCase):
    """Desk-scale versions of the comparison studies; minutes each on a laptop CPU."""

    def run_batch(self, environment, variant, trials=20, **kwargs):
        spec = BenchmarkSpec(environment, variant, trials=trials, base_seed=0, **kwargs)
        return BenchmarkService.run_benchmark(spec, backend='process')

    def test_cartpole_comparison(self):
        overrides = {'laps': 1}
        oracle = self.run_batch('cartpole', 'oracle', environment_overrides=overrides)
        learner = self.run_batch('cartpole', 'prmppi', environment_overrides=overrides)
        nominal = self.run_batch('cartpole', 'nominal', environment_overrides=overrides)
        self.assertEqual(learner.summary()['success']['successes'], 20)
        self.assertLessEqual(learner.summary()['rmse']['mean'], 1.25 * oracle.summary()['rmse']['mean'])
        self.assertLess(nominal.summary()['success']['successes'], 20)

    def test_quadrotor_accuracy_improves_over_laps(self):
        summary = self.run_batch('quad2d', 'prmppi').summary()
        laps = summary['laps']
        self.assertGreaterEqual(laps[-1]['pa']['mean'], 90.0)
        self.assertLessEqual(laps[2]['rmse']['mean'], laps[0]['rmse']['mean'])

    def test_robust_backup_ablation(self):
        with_backup = self.run_batch('quad2d_partial', 'prmppi').summary()
        without_backup = self.run_batch('quad2d_partial', 'prmppi-no-backup').summary()
        self.assertGreaterEqual(with_backup['success']['successes'], without_backup['success']['successes'])
        self.assertGreaterEqual(with_backup['fallbacks'], 1)

    def test_sample_count_sweep(self):
        step_means = []
        for delta, samples in ((0.2, 5), (0.1, 10), (0.05, 20)):
            result = self.run_batch('quad2d', 'prmppi', trials=2, environment_overrides={'laps': 1},
                                    controller_overrides={'delta': delta, 'samples': samples})
            self.assertTrue(all(record.status == 'completed' for record in result.records))
            step_means.append(np.mean([record.step_times['step_mean'] for record in result.records]))
        self.assertTrue(step_means[0] < step_means[1] < step_means[2])
