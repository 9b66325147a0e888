"""
Minimax functionals of the scalar denoising game, where the statistician picks tau and
nature picks the nonzero amplitude mu. The phase transition and noise sensitivity curves
are level sets of these functionals.
"""

import math
import logging
import numpy as np

from scipy import optimize

from . prox import threshold, validate_exponent, c_p
from . prior import SignalPrior, PointMass
from . quadrature import NormalQuadrature, normal_pdf, normal_cdf
from . se import atom_risks


MU_GRID = np.logspace(-2.0, 3.0, 200)
MU_LARGE = 1e3
TAU_GRID = np.logspace(-3.0, 3.0, 40)
LOG_TOLERANCE = 1e-8
MU_TOLERANCE = 1e-6
EPS_TOLERANCE = 1e-8
PLATEAU = 1e-12
M1_TAU_MAX = 40.0


def encode(value):
    if value is not None and math.isinf(value):
        return "inf"
    return value


def decode(value):
    return None if value is None else float(value)


class MinimaxResult(object):
    def __init__(self, value, tau_star, mu_star=None, gap=None):
        self.value = float(value)
        self.tau_star = float(tau_star)
        self.mu_star = None if mu_star is None else float(mu_star)
        self.gap = None if gap is None else float(gap)

    def dump(self):
        return {
            "value": self.value,
            "tau_star": encode(self.tau_star),
            "mu_star": encode(self.mu_star),
            "gap": self.gap
        }

    @staticmethod
    def load(data):
        return MinimaxResult(
            data["value"], decode(data["tau_star"]), decode(data.get("mu_star")), decode(data.get("gap")))


class LeastFavorable(object):
    def __init__(self, epsilon, mu_star, value):
        self.epsilon = epsilon
        self.mu_star = mu_star
        self.value = value

    @property
    def finite(self):
        return math.isfinite(self.mu_star)

    @property
    def prior(self):
        """
        (1 - eps)*Delta_0 + eps*Delta_mu*, or None when mu* is infinite.
        """
        if not self.finite:
            return None
        return SignalPrior(self.epsilon, PointMass(self.mu_star))

    def dump(self):
        return {
            "epsilon": self.epsilon,
            "mu_star": encode(self.mu_star),
            "value": self.value,
            "prior": self.prior.dump() if self.finite else None
        }


def soft_null_risk(tau):
    """
    E eta_1(Z; tau)^2 = 2(1 + tau^2)Phi(-tau) - 2 tau phi(tau)
    """
    tau = np.asarray(tau, dtype=float)
    return 2.0 * (1.0 + tau ** 2) * normal_cdf(-tau) - 2.0 * tau * normal_pdf(tau)


def m1_objective(tau, epsilon):
    return epsilon * (1.0 + tau ** 2) + (1.0 - epsilon) * soft_null_risk(tau)


def validate_epsilon(epsilon):
    if not 0 <= epsilon <= 1:
        raise MinimaxError("Sparsity should be in [0, 1], got {0}".format(epsilon))


def m1_tau(epsilon):
    """
    Minimizing tau of the soft thresholding minimax risk.
    """
    validate_epsilon(epsilon)

    if epsilon == 0:
        return math.inf
    if epsilon == 1:
        return 0.0

    found = optimize.minimize_scalar(
        lambda t: float(m1_objective(t, epsilon)), bounds=(0.0, M1_TAU_MAX),
        method="bounded", options={"xatol": 1e-10})
    return float(found.x)


def m1(epsilon):
    """
    Soft thresholding minimax risk inf_tau eps(1 + tau^2) + (1 - eps) E eta_1(Z; tau)^2.
    """
    validate_epsilon(epsilon)

    if epsilon == 0:
        return 0.0
    if epsilon == 1:
        return 1.0

    return float(m1_objective(m1_tau(epsilon), epsilon))


def m1_stationary(epsilon):
    """
    Same value as m1, from the first order condition eps*tau = 2(1 - eps)(phi(tau) - tau*Phi(-tau)).
    :returns (value, tau)
    """
    validate_epsilon(epsilon)

    if epsilon == 0:
        return 0.0, math.inf
    if epsilon == 1:
        return 1.0, 0.0

    def condition(t):
        return epsilon * t - 2.0 * (1.0 - epsilon) * (normal_pdf(t) - t * normal_cdf(-t))

    tau = optimize.brentq(condition, 0.0, M1_TAU_MAX, xtol=1e-14)
    return float(m1_objective(tau, epsilon)), float(tau)


def eps_star_1(delta):
    """
    sup{eps : m1(eps) < delta}
    """
    if not delta > 0:
        raise MinimaxError("Undersampling ratio should be positive, got {0}".format(delta))

    if delta >= 1:
        return 1.0

    return float(optimize.bisect(lambda e: m1(e) - delta, 0.0, 1.0, xtol=EPS_TOLERANCE))


def large_noise_gamma(alpha, p, quadrature):
    validate_exponent(p)

    if alpha == 0:
        return 1.0

    lam = (alpha / c_p(p)) ** (2.0 - p)
    return float(atom_risks(1.0, lam, p, [0.0], quadrature)[0, 0])


class Minimax(object):
    """
    Evaluator of the minimax functionals for one quadrature order, memoized in a CurveCache when given.
    """

    def __init__(self, quadrature=None, cache=None):
        self.quadrature = quadrature or NormalQuadrature()
        self.cache = cache

    def __cached__(self, kind, compute, **params):
        if self.cache is not None:
            found = self.cache.get(kind, **params)
            if found is not None:
                return MinimaxResult.load(found)

        result = compute()

        if self.cache is not None:
            self.cache.put(kind, result.dump(), **params)

        return result

    def __risks__(self, taus, p, mus):
        # rows: taus; columns: the null atom then every mu
        values = np.concatenate([[0.0], np.atleast_1d(mus)])
        return atom_risks(1.0, taus, p, values, self.quadrature)

    def inner_risk(self, mu, tau, p, epsilon):
        """
        (1 - eps) E eta_p(Z; tau)^2 + eps E(eta_p(mu + Z; tau) - mu)^2
        """
        validate_exponent(p)
        validate_epsilon(epsilon)

        if math.isinf(mu):
            return float(self.__infinite_mu__(np.array([tau]), p, epsilon)[0])

        r = self.__risks__(tau, p, mu)[0]
        return float((1.0 - epsilon) * r[0] + epsilon * r[1])

    def __infinite_mu__(self, taus, p, epsilon):
        """
        Limit of the inner risk as mu -> infinity, for every tau.
        """
        taus = np.asarray(taus, dtype=float)
        null = self.__risks__(taus, p, [])[:, 0]

        if p == 1:
            signal = 1.0 + taus ** 2
        else:
            # far above the threshold eta_p(u) = u - tau*p*|u|^(p-1) + ..., so the bias vanishes
            large = self.__risks__(taus, p, [MU_LARGE])[:, 1]
            corrected = large - (taus * p * MU_LARGE ** (p - 1.0)) ** 2
            signal = np.where(threshold(taus, p) < 0.5 * MU_LARGE, corrected, 1.0)

        return (1.0 - epsilon) * null + epsilon * signal

    def __envelope__(self, taus, p, epsilon):
        """
        sup over mu of the inner risk, for every tau.
        :returns (values, maximizing mu)
        """
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        r = self.__risks__(taus, p, MU_GRID)
        inner = (1.0 - epsilon) * r[:, :1] + epsilon * r[:, 1:]

        best = np.argmax(inner, axis=1)
        values = inner[np.arange(len(taus)), best]
        mus = MU_GRID[best]

        for row, i in enumerate(best):
            if 0 < i < len(MU_GRID) - 1:
                tau = taus[row]
                found = optimize.minimize_scalar(
                    lambda e: -self.inner_risk(10.0 ** e, tau, p, epsilon),
                    bounds=(math.log10(MU_GRID[i - 1]), math.log10(MU_GRID[i + 1])),
                    method="bounded", options={"xatol": MU_TOLERANCE})
                if -found.fun > values[row]:
                    values[row] = -found.fun
                    mus[row] = 10.0 ** found.x

        limit = self.__infinite_mu__(taus, p, epsilon)
        # a plateau reaching the limit counts as attained at infinity
        at_infinity = limit >= values - PLATEAU
        return np.where(at_infinity, limit, values), np.where(at_infinity, math.inf, mus)

    def __minimize_log__(self, objective, grid, values):
        """
        Golden-section refinement of a grid minimum in log10 coordinates.
        """
        exponents = np.log10(grid)
        best = int(np.argmin(values))
        found, found_value = exponents[best], values[best]

        try:
            if 0 < best < len(grid) - 1:
                refined = optimize.minimize_scalar(
                    objective, bracket=(exponents[best - 1], exponents[best], exponents[best + 1]),
                    method="golden", tol=LOG_TOLERANCE)
            else:
                lo = exponents[max(best - 1, 0)]
                hi = exponents[min(best + 1, len(grid) - 1)]
                refined = optimize.minimize_scalar(
                    objective, bounds=(lo, hi), method="bounded", options={"xatol": LOG_TOLERANCE})
        except ValueError:
            refined = None

        if refined is not None and refined.fun < found_value:
            return 10.0 ** float(refined.x), float(refined.fun)

        return 10.0 ** float(found), float(found_value)

    def m_bar(self, p, epsilon):
        """
        inf over tau of sup over mu of the inner risk.
        """
        validate_exponent(p)
        validate_epsilon(epsilon)
        return self.__cached__("m_bar", lambda: self.__m_bar__(p, epsilon), p=p, epsilon=epsilon)

    def __m_bar__(self, p, epsilon):
        if epsilon == 0:
            return MinimaxResult(0.0, math.inf)

        values, mus = self.__envelope__(TAU_GRID, p, epsilon)

        def objective(e):
            return float(self.__envelope__(10.0 ** e, p, epsilon)[0][0])

        tau, value = self.__minimize_log__(objective, TAU_GRID, values)

        # tau = 0 is the identity denoiser with risk exactly 1
        if value >= 1.0:
            return MinimaxResult(1.0, 0.0)

        mu = float(self.__envelope__(tau, p, epsilon)[1][0])
        return MinimaxResult(value, tau, mu_star=mu)

    def __best_tau__(self, mu, p, epsilon):
        """
        inf over tau of the inner risk at a fixed mu (possibly infinite).
        :returns (value, tau)
        """
        if math.isinf(mu):
            if p < 1:
                # bias vanishes at infinity, so thresholding everything leaves eps*1
                return epsilon, math.inf

            values = self.__infinite_mu__(TAU_GRID, p, epsilon)

            def objective(e):
                return float(self.__infinite_mu__(np.array([10.0 ** e]), p, epsilon)[0])
        else:
            r = self.__risks__(TAU_GRID, p, mu)
            values = (1.0 - epsilon) * r[:, 0] + epsilon * r[:, 1]

            def objective(e):
                return self.inner_risk(mu, 10.0 ** e, p, epsilon)

        tau, value = self.__minimize_log__(objective, TAU_GRID, values)

        if value >= 1.0:
            return 1.0, 0.0

        return value, tau

    def m_under(self, p, epsilon):
        """
        sup over mu of inf over tau of the inner risk.
        """
        validate_exponent(p)
        validate_epsilon(epsilon)
        return self.__cached__("m_under", lambda: self.__m_under__(p, epsilon), p=p, epsilon=epsilon)

    def __m_under__(self, p, epsilon):
        if epsilon == 0:
            return MinimaxResult(0.0, math.inf)

        r = self.__risks__(TAU_GRID, p, MU_GRID)
        inner = (1.0 - epsilon) * r[:, :1] + epsilon * r[:, 1:]
        coarse = np.minimum(inner.min(axis=0), 1.0)

        i = int(np.argmax(coarse))
        lo, hi = MU_GRID[max(i - 1, 0)], MU_GRID[min(i + 1, len(MU_GRID) - 1)]

        found = optimize.minimize_scalar(
            lambda e: -self.__best_tau__(10.0 ** e, p, epsilon)[0],
            bounds=(math.log10(lo), math.log10(hi)), method="bounded", options={"xatol": MU_TOLERANCE})

        mu = 10.0 ** float(found.x)
        value, tau = self.__best_tau__(mu, p, epsilon)

        v, t = self.__best_tau__(MU_GRID[i], p, epsilon)
        if v > value:
            mu, value, tau = MU_GRID[i], v, t

        v, t = self.__best_tau__(math.inf, p, epsilon)
        if v >= value - PLATEAU:
            mu, value, tau = math.inf, max(v, value), t

        return MinimaxResult(value, tau, mu_star=mu)

    def saddle(self, p, epsilon):
        """
        Upper value with its tau, the lower value's mu and the duality gap.
        """
        upper = self.m_bar(p, epsilon)
        lower = self.m_under(p, epsilon)

        if upper.value < lower.value - 1e-8:
            logging.warning("Weak duality violated for p={0}, eps={1}: {2} < {3}".format(
                p, epsilon, upper.value, lower.value))

        return MinimaxResult(upper.value, upper.tau_star, mu_star=lower.mu_star, gap=upper.value - lower.value)

    def eps_star_p(self, delta, p, which="bar", tol=EPS_TOLERANCE):
        """
        Phase transition of the minimax functional:
        "bar" is inf{eps : m_bar(eps) >= delta}, "under" is sup{eps : m_under(eps) <= delta}.
        """
        validate_exponent(p)

        if which not in ("bar", "under"):
            raise MinimaxError("Unknown minimax kind '{0}', expected 'bar' or 'under'".format(which))

        if not delta > 0:
            raise MinimaxError("Undersampling ratio should be positive, got {0}".format(delta))

        evaluate = self.m_bar if which == "bar" else self.m_under
        seen = []

        def value(e):
            v = evaluate(p, e).value
            for other_e, other_v in seen:
                if (other_e - e) * (other_v - v) < -1e-8 * max(abs(v), 1.0):
                    logging.warning("Minimax value is not monotone in eps near {0} (p={1})".format(e, p))
                    break
            seen.append((e, v))
            return v

        if which == "bar":
            above = lambda e: value(e) >= delta
        else:
            above = lambda e: value(e) > delta

        lo, hi = 0.0, 1.0
        if not above(hi):
            return 1.0

        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if above(mid):
                hi = mid
            else:
                lo = mid

        return hi if which == "bar" else lo

    def continuation_pt(self, delta, p_grid, tol=EPS_TOLERANCE):
        if not p_grid:
            raise MinimaxError("Exponent grid should not be empty")

        return max(self.eps_star_p(delta, p, "bar", tol) for p in p_grid)

    def gamma_alpha_p(self, alpha, p):
        """
        Large noise risk constant E eta_p(Z; (alpha/c_p)^(2-p))^2.
        """
        if not alpha >= 0:
            raise MinimaxError("alpha should be non-negative, got {0}".format(alpha))
        return large_noise_gamma(alpha, p, self.quadrature)

    def noise_sensitivity_bound(self, delta, epsilon, p):
        """
        Upper bound 1 / (1 - m_bar/delta) on sigma_h^2 / sigma_w^2.
        :raises MinimaxError when m_bar >= delta
        """
        validate_epsilon(epsilon)

        if epsilon == 0:
            return 1.0

        value = self.m_bar(p, epsilon).value

        if value >= delta:
            raise MinimaxError("Noise sensitivity is unbounded: minimax risk {0} >= delta {1}".format(value, delta))

        return 1.0 / (1.0 - value / delta)

    def large_noise_ratio(self, delta, alpha, p):
        gamma = self.gamma_alpha_p(alpha, p)

        if gamma >= delta:
            raise MinimaxError("Large noise ratio is unbounded: Gamma {0} >= delta {1}".format(gamma, delta))

        return 1.0 / (1.0 - gamma / delta)

    def least_favorable_prior(self, p, epsilon):
        result = self.m_under(p, epsilon)
        mu = math.inf if result.mu_star is None else result.mu_star

        if math.isinf(mu):
            logging.warning("Least favorable amplitude is infinite for p={0}, eps={1}".format(p, epsilon))

        return LeastFavorable(epsilon, mu, result.value)


def low_noise_constant(delta, epsilon, p, prior):
    """
    Second order term of the lowest stable fixed point as sigma_w -> 0, that is the limit of
    (sigma_l^2 - delta/(delta - eps) sigma_w^2) / (sigma_w^(4-2p) log(1/sigma_w)^(2-p)):
    eps c_p^(4-2p) p^2 E|U|^(2p-2) delta^(2-p) / ((4-4p)^(2-p) (delta - eps)^(3-p)).
    """
    if not 0 < p < 1:
        raise MinimaxError("Low noise constant is defined for 0 < p < 1, got {0}".format(p))

    if not 0 <= epsilon < delta:
        raise MinimaxError("Low noise constant needs eps < delta")

    moment = prior.nonzero.abs_moment(2.0 * p - 2.0)

    return (epsilon * c_p(p) ** (4.0 - 2.0 * p) * p ** 2 * moment * delta ** (2.0 - p)
            / ((4.0 - 4.0 * p) ** (2.0 - p) * (delta - epsilon) ** (3.0 - p)))


class MinimaxError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message
