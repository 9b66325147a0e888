
from unittest import TestCase

from .. model.se import StateEvolution, SEConfig, SEError, FixedPointReport
from .. model.se import FixedPolicy, ScaledPolicy, ThresholdLevelPolicy, OptimalLambdaPolicy, OptimalAdaptationPolicy
from .. model.se import Policy, STABLE, UNSTABLE, INFINITE_LAMBDA, risk
from .. model.prior import SignalPrior, SymmetricTwoPoint, PointMass
from .. model.prox import eta, threshold
from .. model.quadrature import NormalQuadrature, normal_pdf
from .. model.minimax import m1_tau, m1, eps_star_1

from scipy import integrate

import math
import numpy as np


def two_point(delta, epsilon, sigma_w=0.0, mu=1.0):
    return SEConfig(delta, sigma_w, SignalPrior(epsilon, SymmetricTwoPoint(mu)))


def integrated_risk(sigma, lam, p, x):
    """
    E(eta_p(x + sigma*Z) - x)^2 by adaptive integration, split at the thresholds.
    """
    cut = float(threshold(lam, p))
    kinks = sorted([(-cut - x) / sigma, (cut - x) / sigma])

    def integrand(z):
        return (float(eta(x + sigma * z, lam, p)) - x) ** 2 * float(normal_pdf(z))

    edges = [-12.0] + [k for k in kinks if -12.0 < k < 12.0] + [12.0]
    return sum(integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
               for a, b in zip(edges[:-1], edges[1:]))


class RiskTestCase(TestCase):

    @classmethod
    def setUpClass(cls):
        cls.quadrature = NormalQuadrature()

    def test_against_adaptive_integration(self):
        prior = SignalPrior(0.2, SymmetricTwoPoint(1.5))

        for p, lam, sigma in ((0.5, 1.0, 0.7), (0.0, 0.3, 0.4), (1.0, 0.5, 1.2), (0.8, 2.0, 2.0)):
            expected = (0.8 * integrated_risk(sigma, lam, p, 0.0) +
                        0.1 * integrated_risk(sigma, lam, p, 1.5) +
                        0.1 * integrated_risk(sigma, lam, p, -1.5))
            self.assertAlmostEqual(risk(sigma, lam, p, prior, self.quadrature), expected, places=9)

    def test_limits(self):
        prior = SignalPrior(0.1, SymmetricTwoPoint(2.0))

        self.assertEqual(risk(0.0, 0.0, 0.5, prior, self.quadrature), 0.0)
        self.assertAlmostEqual(risk(0.0, 100.0, 0.5, prior, self.quadrature), 0.4, places=14)
        self.assertAlmostEqual(risk(0.5, INFINITE_LAMBDA, 0.5, prior, self.quadrature), 0.4, places=14)
        self.assertAlmostEqual(risk(0.5, 0.0, 0.5, prior, self.quadrature), 0.25, places=12)

    def test_vectorized(self):
        prior = SignalPrior(0.1, SymmetricTwoPoint(1.0))
        lams = np.array([0.1, 0.5, 2.0])
        values = risk(0.3, lams, 0.5, prior, self.quadrature)

        self.assertEqual(values.shape, (3,))
        for lam, value in zip(lams, values):
            self.assertAlmostEqual(risk(0.3, float(lam), 0.5, prior, self.quadrature), value, places=14)

    def test_scale_free(self):
        prior = SignalPrior(0.1, SymmetricTwoPoint(1.0))

        for p in (0.0, 0.5, 1.0):
            for factor in (0.5, 2.0):
                scaled = risk(0.4 * factor, 0.3 * factor ** (2.0 - p), p, prior.scaled(factor), self.quadrature)
                self.assertAlmostEqual(scaled / factor ** 2, risk(0.4, 0.3, p, prior, self.quadrature), places=10)

    def test_negative_noise(self):
        with self.assertRaises(SEError):
            risk(-1.0, 1.0, 0.5, SignalPrior(0.1, PointMass(1.0)), self.quadrature)


class PolicyTestCase(TestCase):

    def test_selection(self):
        self.assertEqual(FixedPolicy(0.3, 0.5).select(2.0, None), (0.3, 0.5))

        lam, p = ScaledPolicy(0.5, 0.5).select(4.0, None)
        self.assertAlmostEqual(lam, 0.5 * 4.0 ** 1.5, places=12)

        lam, p = ScaledPolicy(0.5, 0.5, power=0.5).select(4.0, None)
        self.assertAlmostEqual(lam, 1.0, places=12)

        for p in (0.0, 0.5, 1.0):
            lam, _ = ThresholdLevelPolicy(2.5, p).select(0.3, None)
            self.assertAlmostEqual(float(threshold(lam, p)), 0.75, places=12)

    def test_load(self):
        for policy in (FixedPolicy(0.3, 0.5), ScaledPolicy(0.5, 0.2), ScaledPolicy(0.5, 0.2, power=0.2),
                       ThresholdLevelPolicy(2.5, 0.5), OptimalLambdaPolicy(0.7),
                       OptimalAdaptationPolicy([0.0, 0.5, 1.0])):
            self.assertEqual(Policy.load(policy.dump()).dump(), policy.dump())

        with self.assertRaises(SEError):
            Policy.load({"kind": "greedy"})

        with self.assertRaises(SEError):
            Policy.load({"kind": "fixed", "p": 0.5})

        with self.assertRaises(SEError):
            OptimalAdaptationPolicy([])

    def test_config(self):
        config = two_point(0.2, 0.05, sigma_w=0.01)
        loaded = SEConfig.load(config.dump())
        self.assertEqual(loaded.dump(), config.dump())

        with self.assertRaises(SEError):
            two_point(0.0, 0.05)

        with self.assertRaises(SEError):
            two_point(0.2, 0.05, sigma_w=-1.0)

        with self.assertRaises(SEError):
            SEConfig.load({"delta": 0.2})


class StateEvolutionTestCase(TestCase):

    def test_psi(self):
        config = two_point(0.25, 0.1, sigma_w=0.1)
        se = StateEvolution(config)
        policy = FixedPolicy(0.5, 0.5)

        expected = 0.01 + se.risk(0.6, 0.5, 0.5) / 0.25
        self.assertAlmostEqual(se.psi(0.36, policy), expected, places=14)

        with self.assertRaises(SEError):
            se.psi(-1.0, policy)

        curve = se.psi_curve(policy, [0.1, 0.2])
        self.assertEqual([s for s, _ in curve], [0.1, 0.2])

    def test_iterate(self):
        se = StateEvolution(two_point(0.25, 0.1, sigma_w=0.1))
        policy = FixedPolicy(0.5, 0.5)

        trajectory = se.iterate(policy, 1.0, iterations=5, tol=0)
        self.assertEqual(len(trajectory), 6)
        self.assertEqual(trajectory[0], 1.0)

        for current, following in zip(trajectory[:-1], trajectory[1:]):
            self.assertAlmostEqual(se.psi(current, policy), following, places=14)

    def test_optimal_lambda(self):
        se = StateEvolution(two_point(0.25, 0.1))

        for p in (0.0, 0.5, 1.0):
            lam = se.optimal_lambda(0.3, p)
            best = se.risk(0.3, lam, p)

            grid = np.logspace(-4, 3, 400)
            self.assertLessEqual(best, float(np.min(se.risk(0.3, grid, p))) + 1e-12)

        self.assertEqual(se.optimal_lambda(0.0, 0.5), 0.0)
        self.assertIn((0.3, 0.5), se.optimal_cache)

    def test_optimal_lambda_without_signal(self):
        se = StateEvolution(SEConfig(0.25, 0.0, SignalPrior(0.0, PointMass(1.0))))
        self.assertEqual(se.optimal_lambda(0.5, 0.5), INFINITE_LAMBDA)
        self.assertEqual(se.psi(0.25, OptimalLambdaPolicy(0.5)), 0.0)

    def test_soft_threshold_matches_minimax_tau(self):
        epsilon = 0.05
        se = StateEvolution(two_point(0.25, epsilon))

        sigma = 1e-3
        self.assertAlmostEqual(se.optimal_lambda(sigma, 1.0) / sigma / m1_tau(epsilon), 1.0, places=3)

        ratio = se.risk(sigma, se.optimal_lambda(sigma, 1.0), 1.0) / sigma ** 2
        self.assertAlmostEqual(ratio / m1(epsilon), 1.0, places=6)

    def test_optimal_adaptation(self):
        se = StateEvolution(two_point(0.25, 0.1))
        lam, p = se.optimal_adaptation(0.3, [0.0, 0.5, 1.0])

        best = se.risk(0.3, lam, p)
        for other in (0.0, 0.5, 1.0):
            self.assertLessEqual(best, se.risk(0.3, se.optimal_lambda(0.3, other), other))

        with self.assertRaises(SEError):
            se.optimal_adaptation(0.3, [])

    def test_adaptation_picks_exponent_by_noise_level(self):
        se = StateEvolution(two_point(0.2, 0.05))

        # hard threshold at low noise, soft threshold at high noise
        for sigma in (0.05, 0.1):
            self.assertEqual(se.optimal_adaptation(sigma, [0.0, 1.0])[1], 0.0)
        self.assertEqual(se.optimal_adaptation(1.0, [0.0, 1.0])[1], 1.0)

        # everything is killed at very high noise; the tie goes to the soft threshold
        self.assertEqual(se.optimal_adaptation(3.0, [1.0, 0.0, 0.5]), (INFINITE_LAMBDA, 1.0))

    def test_noise_sensitivity_derivative(self):
        config = two_point(0.5, 0.05, sigma_w=0.1)
        policy = OptimalLambdaPolicy(1.0)
        derivative = StateEvolution(config).noise_sensitivity(policy)["derivative"]

        noise, step = 0.01, 1e-5
        upper = StateEvolution(config.with_noise(math.sqrt(noise + step))).lowest_stable(policy)
        lower = StateEvolution(config.with_noise(math.sqrt(noise - step))).lowest_stable(policy)

        self.assertAlmostEqual(derivative / ((upper - lower) / (2.0 * step)), 1.0, delta=1e-4)

    def test_slope_at_zero(self):
        delta, epsilon = 0.3, 0.1
        se = StateEvolution(two_point(delta, epsilon))

        for p in (0.0, 0.5):
            policy = OptimalLambdaPolicy(p)
            s = 1e-8
            self.assertAlmostEqual(se.psi(s, policy) / s, epsilon / delta, delta=0.05 * epsilon / delta)

    def test_noise_sensitivity_needs_noise(self):
        se = StateEvolution(two_point(0.25, 0.1))
        with self.assertRaises(SEError):
            se.noise_sensitivity(OptimalLambdaPolicy(0.5))


class FixedPointsTestCase(TestCase):

    def test_soft_threshold_unique(self):
        for delta, epsilon in ((0.25, 0.05), (0.5, 0.1), (0.2, 0.03)):
            se = StateEvolution(two_point(delta, epsilon, sigma_w=0.1))
            policy = OptimalLambdaPolicy(1.0)

            report = se.fixed_points(policy, points=200)
            stable = report.stable()

            self.assertEqual(len(stable), 1)
            self.assertAlmostEqual(se.psi(stable[0], policy) / stable[0], 1.0, places=7)
            self.assertAlmostEqual(se.highest_stable(policy) / stable[0], 1.0, places=5)

    def test_noiseless_zero(self):
        se = StateEvolution(two_point(0.3, 0.1))
        report = se.fixed_points(OptimalLambdaPolicy(0.5), points=200)
        self.assertIn((0.0, STABLE), report.points)
        self.assertEqual(report.lowest_stable, 0.0)
        self.assertEqual(se.lowest_stable(OptimalLambdaPolicy(0.5)), 0.0)

        se = StateEvolution(two_point(0.3, 0.4))
        report = se.fixed_points(OptimalLambdaPolicy(0.0), points=200)
        self.assertIn((0.0, UNSTABLE), report.points)

    def test_bound(self):
        se = StateEvolution(two_point(0.25, 0.1, sigma_w=0.1))
        with self.assertRaises(SEError):
            se.fixed_points(OptimalLambdaPolicy(1.0), sigma_sq_max=0.5)

    def test_report(self):
        report = FixedPointReport([(2.0, STABLE), (0.0, STABLE), (1.0, UNSTABLE)])
        self.assertEqual(report.lowest_stable, 0.0)
        self.assertEqual(report.highest_stable, 2.0)
        self.assertEqual(report.dump()["fixed_points"][1], {"sigma_sq": 1.0, "class": UNSTABLE})

        self.assertIsNone(FixedPointReport([]).lowest_stable)


class PhaseTransitionTestCase(TestCase):
    """
    Noiseless recovery from a small start: sigma^2 goes to zero iff eps is below the transition.
    """

    def run_from(self, delta, epsilon, p, start=1e-6):
        se = StateEvolution(two_point(delta, epsilon))
        return se.iterate(OptimalLambdaPolicy(p), start, iterations=300, tol=1e-10)[-1]

    def test_lowest_fixed_point(self):
        delta = 0.3
        for p in (0.0, 0.5):
            self.assertLess(self.run_from(delta, delta - 0.02, p), 1e-10)
            self.assertGreater(self.run_from(delta, delta + 0.02, p), 1e-4)

    def test_soft_threshold(self):
        delta = 0.3
        transition = eps_star_1(delta)

        self.assertLess(self.run_from(delta, transition - 0.01, 1.0), 1e-10)
        self.assertGreater(self.run_from(delta, transition + 0.01, 1.0), 1e-4)


class LowNoiseTestCase(TestCase):

    def test_noise_sensitivity(self):
        delta, epsilon = 0.1, 0.01
        noise = 1e-6

        se = StateEvolution(two_point(delta, epsilon, sigma_w=math.sqrt(noise)))
        expected = 1.0 / (1.0 - epsilon / delta)

        ratio = se.lowest_stable(OptimalLambdaPolicy(0.5)) / noise
        self.assertAlmostEqual(ratio / expected, 1.0, delta=0.02)

        expected = 1.0 / (1.0 - m1(epsilon) / delta)
        ratio = se.lowest_stable(OptimalLambdaPolicy(1.0)) / noise
        self.assertAlmostEqual(ratio / expected, 1.0, delta=0.02)

    def test_hard_threshold_remainder(self):
        delta, epsilon, sigma_w = 0.2, 0.02, 1e-2

        se = StateEvolution(two_point(delta, epsilon, sigma_w=sigma_w))
        lowest = se.lowest_stable(OptimalLambdaPolicy(0.0))

        self.assertLess(abs(lowest - delta * sigma_w ** 2 / (delta - epsilon)), sigma_w ** 4)

    def test_bias_raises_fixed_point(self):
        delta, epsilon, sigma_w = 0.2, 0.02, 1e-2

        se = StateEvolution(two_point(delta, epsilon, sigma_w=sigma_w))
        lowest = se.lowest_stable(OptimalLambdaPolicy(0.5))

        self.assertGreater(lowest, delta * sigma_w ** 2 / (delta - epsilon))

