from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import trapezoid
from scipy.spatial.distance import pdist
from scipy.stats import gaussian_kde

from apps.base.exceptions import ConfigurationError, ContractViolation, EstimatorDivergence
from apps.dynamics.base import ParamBox
from apps.dynamics.cartpole import CartPole
from apps.dynamics.linear import ScalarLinear

from .estimators import PointEstimator, make_estimator
from .filters import sir_update, systematic_resample, ukf_update
from .kde import kde_bandwidth, kde_density, kde_log_density, kde_log_grad, kde_sample
from .svgd import log_posterior, log_posterior_grad, svgd_transport, svgd_update
from .types import GaussianBelief, NoiseModel, ParameterParticles, TransitionObservation, WeightedParticles

WIDE = ParamBox.from_pairs([[-10.0, 10.0]])

BELIEF_OPTIONS = {
    'particles': 50,
    'svgd_step': 1.0,
    'svgd_iterations': 10,
    'svgd_schedule': 'preconditioned',
    'bandwidth_floor': 1e-4,
    'kde_shrinkage': True,
    'ukf_process_noise': 1e-6,
    'sir_resample_threshold': 0.5,
}


class ConjugateProblem:
    """``x' = a x + xi`` with a Gaussian prior on ``a``; posterior in closed form."""

    def __init__(self, seed=0, steps=50, noise_std=0.5, true_a=0.8):
        rng = np.random.default_rng(seed)
        self.model = ScalarLinear()
        self.noise = NoiseModel.from_std([noise_std])
        self.noise_std = noise_std
        xs = rng.normal(0.0, 1.0, steps)
        ys = true_a * xs + noise_std * rng.normal(size=steps)
        self.observations = [TransitionObservation([x], [0.0], [y]) for x, y in zip(xs, ys)]
        self.xs, self.ys = xs, ys

    def posterior(self, prior_mean, prior_var):
        precision = 1.0 / prior_var + np.sum(self.xs ** 2) / self.noise_std ** 2
        mean = (prior_mean / prior_var + np.sum(self.xs * self.ys) / self.noise_std ** 2) / precision
        return mean, np.sqrt(1.0 / precision)


class KdeBandwidthTests(SimpleTestCase):

    def test_silverman_unit_std(self):
        rng = np.random.default_rng(1)
        data = rng.normal(size=100)
        data = (data - data.mean()) / data.std(ddof=1)
        self.assertAlmostEqual(kde_bandwidth(data[:, None])[0], (4.0 / 300.0) ** 0.2, places=12)
        self.assertAlmostEqual(kde_bandwidth(data[:, None])[0], 0.4217, places=4)

    def test_matches_scipy_silverman(self):
        rng = np.random.default_rng(2)
        data = rng.normal(3.0, 2.0, size=250)
        reference = gaussian_kde(data, bw_method='silverman')
        expected = reference.factor * data.std(ddof=1)
        self.assertAlmostEqual(kde_bandwidth(data[:, None])[0], expected, places=12)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(3)
        particles = rng.normal(size=(40, 2))
        np.testing.assert_allclose(kde_bandwidth(2.0 * particles), 2.0 * kde_bandwidth(particles))

    def test_degenerate_particles_use_floor(self):
        box = ParamBox.from_pairs([[0.0, 2.0], [0.0, 10.0]])
        with self.assertLogs('apps.belief.kde', level='WARNING'):
            bandwidth = kde_bandwidth(np.ones((20, 2)), bounds=box)
        np.testing.assert_allclose(bandwidth, [2e-4, 1e-3])

    def test_single_particle_rejected(self):
        with self.assertRaises(ContractViolation):
            kde_bandwidth(np.ones((1, 1)))


class KdeDensityTests(SimpleTestCase):

    def test_single_particle_is_gaussian_bump(self):
        belief = ParameterParticles(np.array([[0.5]]), WIDE, np.array([0.2]))
        self.assertAlmostEqual(kde_density(belief, np.array([0.5])), 1.0 / (np.sqrt(2 * np.pi) * 0.2))
        self.assertAlmostEqual(kde_density(belief, np.array([0.7])), np.exp(-0.5) / (np.sqrt(2 * np.pi) * 0.2))

    def test_density_peaks_at_particles(self):
        belief = ParameterParticles.from_particles(np.array([[0.0], [0.1], [0.3]]), WIDE)
        sigma = belief.bandwidth[0]
        self.assertGreaterEqual(kde_density(belief, np.array([0.1])), kde_density(belief, np.array([0.3 + 5 * sigma])))

    def test_quadrature_normalisation(self):
        rng = np.random.default_rng(4)
        for shrinkage in (False, True):
            belief = ParameterParticles.from_particles(rng.normal(size=(30, 1)), WIDE, shrinkage=shrinkage)
            sigma = belief.bandwidth[0]
            grid = np.linspace(belief.centres.min() - 8 * sigma, belief.centres.max() + 8 * sigma, 20001)
            density = kde_density(belief, grid[:, None])
            self.assertAlmostEqual(trapezoid(density, grid), 1.0, delta=1e-3)

    def test_log_grad_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        belief = ParameterParticles.from_particles(rng.normal(size=(25, 2)), ParamBox.from_pairs([[-5, 5], [-5, 5]]),
                                                   shrinkage=True)
        for theta in rng.normal(size=(10, 2)):
            reference = np.array([
                (kde_log_density(belief, theta + e) - kde_log_density(belief, theta - e)) / 2e-6
                for e in np.eye(2) * 1e-6
            ])
            np.testing.assert_allclose(kde_log_grad(belief, theta), reference, rtol=1e-5, atol=1e-6)

    def test_far_away_point_stays_finite(self):
        belief = ParameterParticles(np.array([[0.0], [0.1]]), WIDE, np.array([1e-3]))
        self.assertTrue(np.isfinite(kde_log_density(belief, np.array([9.0]))))
        self.assertTrue(np.all(np.isfinite(kde_log_grad(belief, np.array([9.0])))))

    def test_shrinkage_preserves_variance(self):
        rng = np.random.default_rng(6)
        particles = rng.normal(size=(200, 1))
        belief = ParameterParticles.from_particles(particles, WIDE, shrinkage=True)
        np.testing.assert_allclose(belief.variance, particles.var(axis=0, ddof=1), rtol=1e-2)
        np.testing.assert_allclose(belief.centres.mean(axis=0), particles.mean(axis=0))


class KdeSampleTests(SimpleTestCase):

    def test_zero_bandwidth_limit_returns_particles(self):
        particles = np.array([[0.1], [0.5], [0.9]])
        belief = ParameterParticles(particles, WIDE, np.array([1e-300]))
        samples = kde_sample(belief, 50, np.random.default_rng(0))
        for sample in samples:
            self.assertTrue(np.any(np.isclose(particles[:, 0], sample[0], rtol=0, atol=1e-12)))

    def test_sample_mean_matches_particle_mean(self):
        rng = np.random.default_rng(7)
        belief = ParameterParticles.from_particles(rng.normal(size=(40, 1)), WIDE)
        samples = kde_sample(belief, 100_000, np.random.default_rng(8))
        standard_error = np.sqrt(belief.variance[0] / samples.shape[0])
        self.assertLess(abs(samples.mean() - belief.mean[0]), 3 * standard_error)

    def test_seed_determinism(self):
        belief = ParameterParticles.from_particles(np.random.default_rng(9).normal(size=(10, 2)),
                                                   ParamBox.from_pairs([[-5, 5], [-5, 5]]))
        first = kde_sample(belief, 20, np.random.default_rng(11))
        second = kde_sample(belief, 20, np.random.default_rng(11))
        np.testing.assert_array_equal(first, second)

    def test_samples_projected_into_box(self):
        box = ParamBox.from_pairs([[0.0, 1.0]])
        belief = ParameterParticles(np.array([[0.0], [1.0]]), box, np.array([0.5]))
        samples = kde_sample(belief, 1000, np.random.default_rng(0))
        self.assertTrue(np.all((samples >= 0.0) & (samples <= 1.0)))


class LogPosteriorGradTests(SimpleTestCase):

    def test_scalar_closed_form(self):
        model = ScalarLinear()
        noise = NoiseModel.from_std([0.3])
        prior = ParameterParticles.from_particles(np.array([[0.2], [0.4], [1.0]]), WIDE)
        obs = TransitionObservation([2.0], [0.5], [2.1])
        theta = np.array([0.6])
        expected = 2.0 * (2.1 - 0.6 * 2.0 - 0.5) / 0.09 + kde_log_grad(prior, theta)
        np.testing.assert_allclose(log_posterior_grad(model, obs, noise, prior, theta), expected)

    def test_zero_at_consistent_symmetric_point(self):
        model = ScalarLinear()
        prior = ParameterParticles(np.array([[0.3], [0.7]]), WIDE, np.array([0.1]))
        obs = TransitionObservation([2.0], [0.1], [0.5 * 2.0 + 0.1])
        grad = log_posterior_grad(model, obs, NoiseModel.from_std([0.1]), prior, np.array([0.5]))
        np.testing.assert_allclose(grad, [0.0], atol=1e-10)

    def test_cartpole_matches_finite_differences(self):
        model = CartPole()
        rng = np.random.default_rng(12)
        box = ParamBox.from_pairs([[0.9, 1.1], [0.09, 0.11]])
        prior = ParameterParticles.from_particles(box.sample(30, rng), box, shrinkage=True)
        noise = NoiseModel.from_std([1e-3, 1e-2, 1e-3, 1e-2])
        for _ in range(10):
            x = rng.uniform(-0.5, 0.5, 4)
            u = rng.uniform(-10.0, 10.0, 1)
            obs = TransitionObservation(x, u, model.step(x, u, box.sample(1, rng)[0]))
            theta = box.sample(1, rng)[0]
            reference = []
            for i in range(2):
                offset = np.zeros(2)
                offset[i] = 1e-6 * theta[i]
                reference.append(
                    (log_posterior(model, obs, noise, prior, theta + offset)
                     - log_posterior(model, obs, noise, prior, theta - offset)) / (2 * offset[i])
                )
            analytic = log_posterior_grad(model, obs, noise, prior, theta)
            self.assertLessEqual(np.linalg.norm(analytic - reference), 1e-4 * np.linalg.norm(reference))

    def test_batched_over_particles(self):
        model = ScalarLinear()
        prior = ParameterParticles.from_particles(np.array([[0.2], [0.4], [1.0]]), WIDE)
        obs = TransitionObservation([1.0], [0.0], [0.5])
        noise = NoiseModel.from_std([0.2])
        thetas = np.array([[0.1], [0.5], [0.9]])
        batched = log_posterior_grad(model, obs, noise, prior, thetas)
        for theta, row in zip(thetas, batched):
            np.testing.assert_allclose(row, log_posterior_grad(model, obs, noise, prior, theta))


class SvgdTransportTests(SimpleTestCase):

    def test_single_particle_follows_gradient(self):
        direction = svgd_transport(np.array([[0.3, -1.0]]), np.array([[2.0, 0.5]]), 1.0)
        np.testing.assert_array_equal(direction, [[2.0, 0.5]])

    def test_two_particles_repel_symmetrically(self):
        particles = np.array([[0.0, 0.0], [1.0, 0.5]])
        direction = svgd_transport(particles, np.zeros_like(particles), 0.7)
        np.testing.assert_allclose(direction[0], -direction[1])
        self.assertLess(np.dot(direction[0], particles[1] - particles[0]), 0.0)

    def test_repulsion_increases_min_distance(self):
        particles = np.array([[0.0], [0.1], [1.0]])
        direction = svgd_transport(particles, np.zeros_like(particles), 0.1)
        moved = particles + 1e-3 * direction
        self.assertGreater(np.min(pdist(moved)), np.min(pdist(particles)))

    def test_non_positive_bandwidth_rejected(self):
        with self.assertRaises(ContractViolation):
            svgd_transport(np.zeros((2, 1)), np.zeros((2, 1)), 0.0)

    def test_recovers_standard_normal(self):
        from .svgd import median_bandwidth

        particles = np.random.default_rng(13).uniform(-3.0, 3.0, size=(200, 1))
        for _ in range(500):
            particles = particles + 0.5 * svgd_transport(particles, -particles, median_bandwidth(particles))
        self.assertLess(abs(particles.mean()), 0.1)
        self.assertLess(abs(particles.var() - 1.0), 0.15)


class SvgdUpdateTests(SimpleTestCase):

    def test_zero_iterations_only_recompute_bandwidth(self):
        problem = ConjugateProblem()
        particles = np.random.default_rng(0).normal(0.5, 0.5, size=(20, 1))
        belief = ParameterParticles(particles, WIDE, np.array([1.0]))
        updated = svgd_update(belief, problem.model, problem.observations[0], problem.noise, n_iterations=0)
        np.testing.assert_array_equal(updated.particles, particles)
        np.testing.assert_allclose(updated.bandwidth, kde_bandwidth(particles, bounds=WIDE))

    def test_particles_stay_in_box(self):
        problem = ConjugateProblem(true_a=0.8)
        box = ParamBox.from_pairs([[0.0, 0.5]])
        belief = ParameterParticles.from_particles(np.random.default_rng(1).uniform(0.0, 0.5, (30, 1)), box)
        for obs in problem.observations[:10]:
            belief = svgd_update(belief, problem.model, obs, problem.noise)
            self.assertTrue(np.all((belief.particles >= 0.0) & (belief.particles <= 0.5)))

    def test_consistent_observation_does_not_collapse(self):
        model = ScalarLinear()
        belief = ParameterParticles.from_particles(np.random.default_rng(2).normal(0.5, 0.2, (30, 1)), WIDE)
        obs = TransitionObservation([0.0], [0.3], [0.3])
        for _ in range(5):
            belief = svgd_update(belief, model, obs, NoiseModel.from_std([0.1]))
        self.assertGreater(np.min(pdist(belief.particles)), 0.0)

    def test_recovers_conjugate_posterior(self):
        problem = ConjugateProblem()
        particles = np.random.default_rng(3).normal(0.3, 0.5, size=(100, 1))
        belief = ParameterParticles.from_particles(particles, WIDE, shrinkage=True)
        mean, std = problem.posterior(belief.mean[0], belief.variance[0])
        for obs in problem.observations:
            belief = svgd_update(belief, problem.model, obs, problem.noise)
        self.assertLessEqual(abs(belief.mean[0] - mean), 0.05 * abs(mean))
        self.assertLessEqual(abs(belief.particles.std(ddof=1) - std), 0.25 * std)

    def test_adagrad_schedule_moves_toward_posterior(self):
        problem = ConjugateProblem()
        particles = np.random.default_rng(3).normal(0.3, 0.5, size=(100, 1))
        belief = ParameterParticles.from_particles(particles, WIDE, shrinkage=True)
        mean, _ = problem.posterior(belief.mean[0], belief.variance[0])
        initial_error = abs(belief.mean[0] - mean)
        for obs in problem.observations:
            belief = svgd_update(belief, problem.model, obs, problem.noise, step_size=0.05, schedule='adagrad')
        self.assertTrue(np.all(np.isfinite(belief.particles)))
        self.assertLess(abs(belief.mean[0] - mean), 0.5 * initial_error)

    def test_adagrad_schedule_stays_in_box(self):
        problem = ConjugateProblem(true_a=0.8)
        box = ParamBox.from_pairs([[0.0, 0.5]])
        belief = ParameterParticles.from_particles(np.random.default_rng(1).uniform(0.0, 0.5, (30, 1)), box)
        for obs in problem.observations[:10]:
            belief = svgd_update(belief, problem.model, obs, problem.noise, step_size=0.05, schedule='adagrad')
            self.assertTrue(np.all((belief.particles >= 0.0) & (belief.particles <= 0.5)))

    def test_unknown_schedule(self):
        problem = ConjugateProblem()
        belief = ParameterParticles.from_particles(np.random.default_rng(0).normal(0.5, 0.5, (10, 1)), WIDE)
        with self.assertRaises(ContractViolation):
            svgd_update(belief, problem.model, problem.observations[0], problem.noise, schedule='rmsprop')


class UkfTests(SimpleTestCase):

    def test_linear_update_is_exact_kalman(self):
        model = ScalarLinear()
        noise = NoiseModel.from_std([0.4])
        belief = GaussianBelief([0.2], [[0.5]])
        obs = TransitionObservation([1.5], [0.3], [1.1])
        updated = ukf_update(belief, model, obs, noise, np.zeros((1, 1)))
        innovation_var = 1.5 ** 2 * 0.5 + 0.16
        gain = 0.5 * 1.5 / innovation_var
        expected_mean = 0.2 + gain * (1.1 - 0.2 * 1.5 - 0.3)
        expected_var = 0.5 - gain * 1.5 * 0.5
        self.assertAlmostEqual(updated.mean[0], expected_mean, delta=1e-8)
        self.assertAlmostEqual(updated.covariance[0, 0], expected_var, delta=1e-8)

    def test_trace_non_increasing_without_process_noise(self):
        model = CartPole()
        belief = GaussianBelief([1.0, 0.1], np.diag([0.01, 1e-4]))
        x = np.array([0.2, 0.1, 0.3, -0.2])
        u = np.array([4.0])
        obs = TransitionObservation(x, u, model.step(x, u, np.array([1.05, 0.095])))
        noise = NoiseModel.from_std([1e-3, 1e-2, 1e-3, 1e-2])
        trace = np.trace(belief.covariance)
        for _ in range(5):
            belief = ukf_update(belief, model, obs, noise, np.zeros((2, 2)))
            self.assertLessEqual(np.trace(belief.covariance), trace + 1e-15)
            trace = np.trace(belief.covariance)

    def test_recovers_conjugate_posterior(self):
        problem = ConjugateProblem()
        belief = GaussianBelief([0.3], [[0.25]])
        mean, _ = problem.posterior(0.3, 0.25)
        for obs in problem.observations:
            belief = ukf_update(belief, problem.model, obs, problem.noise, np.zeros((1, 1)))
        self.assertLessEqual(abs(belief.mean[0] - mean), 0.05 * abs(mean))

    def test_unrepairable_covariance_diverges(self):
        problem = ConjugateProblem()
        belief = GaussianBelief([0.3], [[0.25]])
        with mock.patch('apps.belief.filters._run_filter', side_effect=np.linalg.LinAlgError('not PD')):
            with self.assertLogs('apps.belief.filters', level='WARNING'):
                with self.assertRaises(EstimatorDivergence):
                    ukf_update(belief, problem.model, problem.observations[0], problem.noise, np.zeros((1, 1)))


class SirTests(SimpleTestCase):

    def test_uniform_likelihood_keeps_weights(self):
        model = ScalarLinear()
        belief = WeightedParticles(np.array([[0.1], [0.2], [0.3], [0.4]]), np.array([0.1, 0.2, 0.3, 0.4]), WIDE)
        obs = TransitionObservation([0.0], [0.2], [0.25])
        updated = sir_update(belief, model, obs, NoiseModel.from_std([0.1]), 0.0, np.random.default_rng(0))
        np.testing.assert_allclose(updated.weights, belief.weights)

    def test_single_consistent_particle_takes_over(self):
        model = ScalarLinear()
        belief = WeightedParticles.uniform(np.array([[0.2], [0.5], [0.9]]), WIDE)
        obs = TransitionObservation([1.0], [0.0], [0.5])
        updated = sir_update(belief, model, obs, NoiseModel.from_std([1e-3]), 0.5, np.random.default_rng(0))
        np.testing.assert_array_equal(updated.particles, np.full((3, 1), 0.5))
        np.testing.assert_allclose(updated.weights, np.full(3, 1.0 / 3.0))

    def test_vanishing_likelihoods_reset_to_uniform(self):
        model = ScalarLinear()
        belief = WeightedParticles(np.array([[9.0], [10.0]]), np.array([0.3, 0.7]), WIDE)
        obs = TransitionObservation([1e308], [0.0], [0.0])
        with self.assertLogs('apps.belief.filters', level='WARNING'):
            updated = sir_update(belief, model, obs, NoiseModel.from_std([0.1]), 0.5, np.random.default_rng(0))
        np.testing.assert_allclose(updated.weights, [0.5, 0.5])

    def test_systematic_resample_is_proportional(self):
        weights = np.array([0.5, 0.25, 0.25])
        for seed in range(20):
            counts = np.bincount(systematic_resample(weights, np.random.default_rng(seed)), minlength=3)
            self.assertEqual(counts.sum(), 3)
            self.assertTrue(np.all(counts >= np.floor(3 * weights)))
            self.assertTrue(np.all(counts <= np.ceil(3 * weights)))

    def test_recovers_conjugate_posterior(self):
        problem = ConjugateProblem()
        rng = np.random.default_rng(4)
        particles = rng.normal(0.3, 0.5, size=(1000, 1))
        belief = WeightedParticles.uniform(particles, WIDE)
        mean, _ = problem.posterior(particles.mean(), particles.var(ddof=1))
        for obs in problem.observations:
            belief = sir_update(belief, problem.model, obs, problem.noise, 0.5, rng)
        self.assertLessEqual(abs(belief.mean[0] - mean), 0.10 * abs(mean))


class EstimatorTests(SimpleTestCase):

    def setUp(self):
        self.model = CartPole()
        self.noise = NoiseModel.from_std([1e-3, 1e-2, 1e-3, 1e-2])
        self.box = ParamBox.from_pairs([[0.9, 1.1], [0.09, 0.11]])
        x = np.array([0.1, 0.0, 0.05, 0.0])
        u = np.array([3.0])
        self.obs = TransitionObservation(x, u, self.model.step(x, u, np.array([1.05, 0.1])))

    def test_learning_estimators_update_and_sample(self):
        for kind in ('svgd', 'ukf', 'sir'):
            estimator = make_estimator(kind, self.model, self.noise, self.box, BELIEF_OPTIONS, np.random.default_rng(0))
            self.assertTrue(estimator.learns)
            estimator.update(self.obs)
            self.assertEqual(estimator.updates, 1)
            samples = estimator.sample(10, np.random.default_rng(1))
            self.assertEqual(samples.shape, (10, 2))
            self.assertEqual(list(estimator.snapshot_frame().columns[:2]), ['m_c', 'm_p'])

    def test_point_belief_never_learns(self):
        estimator = make_estimator('point', self.model, self.noise, self.box, BELIEF_OPTIONS,
                                   np.random.default_rng(0), theta=[1.0, 0.1])
        self.assertIsInstance(estimator, PointEstimator)
        self.assertFalse(estimator.learns)
        estimator.update(self.obs)
        self.assertEqual(estimator.updates, 0)
        np.testing.assert_array_equal(estimator.sample(3, np.random.default_rng(0)), np.tile([1.0, 0.1], (3, 1)))

    def test_prior_belief_samples_box(self):
        estimator = make_estimator('prior', self.model, self.noise, self.box, BELIEF_OPTIONS, np.random.default_rng(0))
        samples = estimator.sample(100, np.random.default_rng(2))
        self.assertTrue(np.all((samples >= self.box.low) & (samples <= self.box.high)))

    def test_svgd_snapshot_has_one_row_per_particle(self):
        estimator = make_estimator('svgd', self.model, self.noise, self.box, BELIEF_OPTIONS, np.random.default_rng(0))
        self.assertEqual(len(estimator.snapshot_frame()), BELIEF_OPTIONS['particles'])

    def test_unknown_kind(self):
        with self.assertRaises(ConfigurationError):
            make_estimator('ekf', self.model, self.noise, self.box, BELIEF_OPTIONS, np.random.default_rng(0))

    def test_point_belief_requires_theta(self):
        with self.assertRaises(ConfigurationError):
            make_estimator('point', self.model, self.noise, self.box, BELIEF_OPTIONS, np.random.default_rng(0))


class NoiseModelTests(SimpleTestCase):

    def test_singular_covariance_rejected(self):
        with self.assertRaises(ContractViolation):
            NoiseModel(np.diag([1.0, 0.0]))

    def test_asymmetric_covariance_rejected(self):
        with self.assertRaises(ContractViolation):
            NoiseModel(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_log_likelihood(self):
        noise = NoiseModel.from_std([2.0])
        expected = -0.5 * np.log(2 * np.pi * 4.0) - 0.5 * 1.0 / 4.0
        self.assertAlmostEqual(noise.log_likelihood(np.array([1.0])), expected)
