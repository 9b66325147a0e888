"""
State evolution: the deterministic recursion sigma^2 -> Psi(sigma^2) that tracks the effective
noise of the message passing iteration, the oracle thresholding policies that drive it, and
the fixed point analysis.
"""

import abc
import logging
import math
import numpy as np

from scipy import optimize

from . prox import eta_and_shrinkage, threshold, validate_exponent, c_p
from . prior import SignalPrior
from . quadrature import NormalQuadrature, DEFAULT_ORDER


INFINITE_LAMBDA = math.inf

TAU_GRID_POINTS = 60
TAU_GRID_LOW = -3.0
TAU_GRID_HIGH = 3.0
TAU_EXTEND_UP = 60
TAU_EXTEND_DOWN = 12
TAU_TOLERANCE = 1e-8

FIXED_POINT_GRID = 2000
FIXED_POINT_RTOL = 1e-10
FIXED_POINT_RETRIES = 2
FIXED_POINT_DENSITY = 4
NEAR_TOUCH = 1e-6
HALF_STABLE = 1e-9
ZERO_OFFSET = 1e-8
ZERO_MARGIN = 1e-6

STABLE = "stable"
UNSTABLE = "unstable"
HALF_STABLE_CLASS = "half-stable"


def atom_risks(sigma, lam, p, values, quadrature):
    """
    E(eta_p(x + sigma*Z; lambda) - x)^2 for every lambda in `lam` and every x in `values`.

    :returns array of shape (len(lam), len(values))
    """
    validate_exponent(p)

    if sigma < 0:
        raise SEError("Noise level should be non-negative, got {0}".format(sigma))

    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    values = np.atleast_1d(np.asarray(values, dtype=float))

    if np.any(lam < 0):
        raise SEError("Regularization weight should be non-negative")

    finite = np.isfinite(lam)
    safe = np.where(finite, lam, 0.0)
    x = values[None, :]

    if sigma == 0:
        estimate, _ = eta_and_shrinkage(x, safe[:, None], p)
        result = np.square(estimate - x)
    else:
        cut = threshold(safe, p)[:, None]

        kinks = np.stack([(-cut - x) / sigma, (cut - x) / sigma], axis=-1)
        z, w = quadrature.pieces(kinks)

        x = x[..., None, None]
        estimate, shrink = eta_and_shrinkage(x + sigma * z, safe[:, None, None, None], p)

        # on the active set eta - x = sigma*z - shrink, exact even when sigma*z is lost in x + sigma*z
        err = np.where(estimate != 0, sigma * z - shrink, -x)
        result = (w * np.square(err)).sum(axis=(-1, -2))

    return np.where(finite[:, None], result, np.square(values)[None, :])


def risk(sigma, lam, p, prior, quadrature):
    """
    Denoising risk E(eta_p(X + sigma*Z; lambda) - X)^2.

    :param lam: a scalar or an array of lambdas, evaluated together
    :returns float for a scalar lambda, array otherwise
    """
    values, weights = prior.atoms(quadrature)
    result = (atom_risks(sigma, lam, p, values, quadrature) * weights).sum(axis=-1)
    return float(result[0]) if np.ndim(lam) == 0 else result


class SEConfig(object):
    def __init__(self, delta, sigma_w, prior, quad_order=DEFAULT_ORDER):
        if not 0 < delta <= 1:
            raise SEError("Undersampling ratio should be in (0, 1], got {0}".format(delta))

        if not sigma_w >= 0:
            raise SEError("Noise std should be non-negative, got {0}".format(sigma_w))

        self.delta = float(delta)
        self.sigma_w = float(sigma_w)
        self.prior = prior
        self.quad_order = int(quad_order)

    def with_noise(self, sigma_w):
        return SEConfig(self.delta, sigma_w, self.prior, self.quad_order)

    def dump(self):
        return {
            "delta": self.delta,
            "sigma_w": self.sigma_w,
            "prior": self.prior.dump(),
            "quad_order": self.quad_order
        }

    @staticmethod
    def load(data):
        try:
            return SEConfig(
                float(data["delta"]),
                float(data.get("sigma_w", 0.0)),
                SignalPrior.load(data["prior"]),
                int(data.get("quad_order", DEFAULT_ORDER)))
        except (KeyError, TypeError, ValueError) as e:
            raise SEError("Malformed state evolution config: {0}".format(e))


class Policy(object, metaclass=abc.ABCMeta):
    """
    Chooses (lambda, p) at a given effective noise level. Optimal policies ask a tuner:
    the state evolution engine (knows the prior) or the SURE tuner (knows only the data).
    """

    KIND = None

    @abc.abstractmethod
    def select(self, sigma, tuner):
        raise NotImplementedError()

    @abc.abstractmethod
    def dump(self):
        raise NotImplementedError()

    @staticmethod
    def load(data):
        try:
            kind = data["kind"]
            if kind == FixedPolicy.KIND:
                return FixedPolicy(float(data["lambda"]), float(data["p"]))
            if kind == ScaledPolicy.KIND:
                power = data.get("power")
                return ScaledPolicy(float(data["tau"]), float(data["p"]),
                                    None if power is None else float(power))
            if kind == ThresholdLevelPolicy.KIND:
                return ThresholdLevelPolicy(float(data["alpha"]), float(data["p"]))
            if kind == OptimalLambdaPolicy.KIND:
                return OptimalLambdaPolicy(float(data["p"]))
            if kind == OptimalAdaptationPolicy.KIND:
                return OptimalAdaptationPolicy([float(p) for p in data["p_grid"]])
        except (KeyError, TypeError, ValueError) as e:
            raise SEError("Malformed policy: {0}".format(e))

        raise SEError("Unknown policy kind: {0}".format(data.get("kind")))


class FixedPolicy(Policy):
    KIND = "fixed"

    def __init__(self, lam, p):
        validate_exponent(p)
        if not lam >= 0:
            raise SEError("Regularization weight should be non-negative, got {0}".format(lam))
        self.lam = float(lam)
        self.p = float(p)

    def select(self, sigma, tuner):
        return self.lam, self.p

    def dump(self):
        return {"kind": FixedPolicy.KIND, "lambda": self.lam, "p": self.p}


class ScaledPolicy(Policy):
    """
    lambda = tau * sigma^power. The default power 2 - p keeps tau scale free;
    power = p is the parametrisation of the simulation runs.
    """

    KIND = "scaled"

    def __init__(self, tau, p, power=None):
        validate_exponent(p)
        if not tau >= 0:
            raise SEError("tau should be non-negative, got {0}".format(tau))
        self.tau = float(tau)
        self.p = float(p)
        self.power = 2.0 - self.p if power is None else float(power)

    def select(self, sigma, tuner):
        return self.tau * sigma ** self.power, self.p

    def dump(self):
        return {"kind": ScaledPolicy.KIND, "tau": self.tau, "p": self.p, "power": self.power}


class ThresholdLevelPolicy(Policy):
    """
    Pins the threshold at alpha * sigma: lambda = (alpha * sigma / c_p)^(2 - p).
    """

    KIND = "threshold"

    def __init__(self, alpha, p):
        validate_exponent(p)
        if not alpha >= 0:
            raise SEError("alpha should be non-negative, got {0}".format(alpha))
        self.alpha = float(alpha)
        self.p = float(p)

    def select(self, sigma, tuner):
        return (self.alpha * sigma / c_p(self.p)) ** (2.0 - self.p), self.p

    def dump(self):
        return {"kind": ThresholdLevelPolicy.KIND, "alpha": self.alpha, "p": self.p}


class OptimalLambdaPolicy(Policy):
    KIND = "optimal"

    def __init__(self, p):
        validate_exponent(p)
        self.p = float(p)

    def select(self, sigma, tuner):
        return tuner.optimal_lambda(sigma, self.p), self.p

    def dump(self):
        return {"kind": OptimalLambdaPolicy.KIND, "p": self.p}


class OptimalAdaptationPolicy(Policy):
    KIND = "adaptive"

    def __init__(self, p_grid):
        if not p_grid:
            raise SEError("Exponent grid should not be empty")
        for p in p_grid:
            validate_exponent(p)
        self.p_grid = [float(p) for p in p_grid]

    def select(self, sigma, tuner):
        return tuner.optimal_adaptation(sigma, self.p_grid)

    def dump(self):
        return {"kind": OptimalAdaptationPolicy.KIND, "p_grid": self.p_grid}


class FixedPointReport(object):
    def __init__(self, points):
        self.points = sorted(points, key=lambda point: point[0])

    def stable(self):
        return [s for s, cls in self.points if cls == STABLE]

    @property
    def lowest_stable(self):
        stable = self.stable()
        return stable[0] if stable else None

    @property
    def highest_stable(self):
        stable = self.stable()
        return stable[-1] if stable else None

    def dump(self):
        return {
            "fixed_points": [{"sigma_sq": s, "class": cls} for s, cls in self.points],
            "lowest_stable": self.lowest_stable,
            "highest_stable": self.highest_stable
        }


class StateEvolution(object):
    """
    State evolution engine for one (delta, sigma_w, prior) configuration.
    Optimal lambdas are memoized per (sigma, p).
    """

    def __init__(self, config, quadrature=None):
        self.config = config
        self.quadrature = quadrature or NormalQuadrature(config.quad_order)
        self.second_moment = config.prior.second_moment()
        self.optimal_cache = {}
        self.warned = set()

    def risk(self, sigma, lam, p):
        return risk(sigma, lam, p, self.config.prior, self.quadrature)

    def psi(self, sigma_sq, policy):
        """
        Psi(sigma^2) = sigma_w^2 + risk(sigma, lambda(sigma), p(sigma)) / delta
        """
        if sigma_sq < 0:
            raise SEError("sigma^2 should be non-negative, got {0}".format(sigma_sq))

        sigma = math.sqrt(sigma_sq)
        lam, p = policy.select(sigma, self)
        return self.config.sigma_w ** 2 + self.risk(sigma, lam, p) / self.config.delta

    def psi_curve(self, policy, sigma_sq_grid):
        return [(float(s), self.psi(float(s), policy)) for s in sigma_sq_grid]

    def __tau_values__(self, sigma, p, exponents):
        scale = sigma ** (2.0 - p)
        return self.risk(sigma, 10.0 ** exponents * scale, p)

    def __check_shape__(self, values, p):
        span = values.max() - values.min()
        if span <= 0:
            return

        inner = values[1:-1]
        minima = (inner < values[:-2]) & (inner <= values[2:])
        deep = minima & (np.minimum(values[:-2], values[2:]) - inner > 1e-9 * span)

        if np.count_nonzero(deep) > 1 and p not in self.warned:
            self.warned.add(p)
            logging.warning("Risk curve in lambda is not quasi-convex for p={0} "
                            "({1} local minima); taking the global one".format(p, np.count_nonzero(deep)))

    def optimal_lambda(self, sigma, p):
        """
        Minimizer of the risk over lambda, searched in tau = lambda / sigma^(2-p).
        :returns INFINITE_LAMBDA when no finite lambda beats thresholding everything
        """
        validate_exponent(p)
        key = (float(sigma), float(p))

        try:
            return self.optimal_cache[key]
        except KeyError:
            pass

        result = self.__optimal_lambda__(float(sigma), float(p))
        self.optimal_cache[key] = result
        return result

    def __optimal_lambda__(self, sigma, p):
        if sigma == 0:
            return 0.0

        if self.second_moment == 0:
            return INFINITE_LAMBDA

        step = (TAU_GRID_HIGH - TAU_GRID_LOW) / (TAU_GRID_POINTS - 1)
        exponents = np.linspace(TAU_GRID_LOW, TAU_GRID_HIGH, TAU_GRID_POINTS)
        values = self.__tau_values__(sigma, p, exponents)

        # the optimum drifts like sigma^-(2-p) as sigma -> 0 for sparse priors
        while True:
            best = int(np.argmin(values))

            if best == len(values) - 1 and exponents[-1] < TAU_GRID_HIGH + TAU_EXTEND_UP:
                more = exponents[-1] + step * np.arange(1, 11)
                exponents = np.concatenate([exponents, more])
                values = np.concatenate([values, self.__tau_values__(sigma, p, more)])
            elif best == 0 and exponents[0] > TAU_GRID_LOW - TAU_EXTEND_DOWN:
                more = exponents[0] - step * np.arange(10, 0, -1)
                exponents = np.concatenate([more, exponents])
                values = np.concatenate([self.__tau_values__(sigma, p, more), values])
            else:
                break

        limit = self.risk(sigma, INFINITE_LAMBDA, p)
        if values[best] >= limit * (1.0 - 1e-12):
            return INFINITE_LAMBDA

        self.__check_shape__(values, p)

        scale = sigma ** (2.0 - p)

        def objective(e):
            return self.risk(sigma, 10.0 ** e * scale, p)

        found = exponents[best]
        found_value = values[best]

        try:
            if 0 < best < len(values) - 1:
                refined = optimize.minimize_scalar(
                    objective, bracket=(exponents[best - 1], exponents[best], exponents[best + 1]),
                    method="golden", tol=TAU_TOLERANCE)
            else:
                lo = exponents[max(best - 1, 0)]
                hi = exponents[min(best + 1, len(values) - 1)]
                refined = optimize.minimize_scalar(
                    objective, bounds=(lo, hi), method="bounded", options={"xatol": TAU_TOLERANCE})
        except ValueError:
            refined = None

        if refined is not None and refined.fun < found_value:
            found = refined.x

        return float(10.0 ** found * scale)

    def optimal_adaptation(self, sigma, p_grid):
        """
        Joint oracle choice of (lambda, p) over an exponent grid.
        """
        if not p_grid:
            raise SEError("Exponent grid should not be empty")

        # ties go to the larger exponent
        best = None
        for p in sorted(p_grid):
            lam = self.optimal_lambda(sigma, p)
            value = self.risk(sigma, lam, p)
            if best is None or value <= best[0]:
                best = (value, lam, float(p))

        return best[1], best[2]

    def iterate(self, policy, sigma0_sq, iterations=100, tol=1e-10):
        """
        :returns the trajectory sigma_0^2, sigma_1^2, ... up to convergence or `iterations` steps
        """
        trajectory = [float(sigma0_sq)]

        for _ in range(iterations):
            current = trajectory[-1]
            following = self.psi(current, policy)
            trajectory.append(following)

            if abs(following - current) < tol * max(current, tol):
                break

        return trajectory

    def __upper_bound__(self):
        return (self.second_moment + 1.0) / self.config.delta + self.config.sigma_w ** 2

    def __near_zero__(self):
        return ZERO_OFFSET * (self.second_moment / self.config.delta + self.config.sigma_w ** 2 + 1.0)

    def __classify_zero__(self, policy):
        if self.psi(0.0, policy) > 0:
            return None

        near = self.__near_zero__()
        ratio = self.psi(near, policy) / near

        if ratio < 1.0 - ZERO_MARGIN:
            return STABLE
        if ratio > 1.0 + ZERO_MARGIN:
            return UNSTABLE
        return HALF_STABLE_CLASS

    @staticmethod
    def __grid__(sigma_sq_max, points):
        half = max(points // 2, 2)
        logs = np.logspace(math.log10(sigma_sq_max) - 12.0, math.log10(sigma_sq_max), half)
        lines = np.linspace(0.0, sigma_sq_max, half + 1)[1:]
        return np.unique(np.concatenate([logs, lines]))

    def __scan__(self, policy, sigma_sq_max, points):
        grid = self.__grid__(sigma_sq_max, points)
        phi = np.array([self.psi(s, policy) - s for s in grid])

        def residual(s):
            return self.psi(s, policy) - s

        roots = []
        for i in range(len(grid) - 1):
            a, b = phi[i], phi[i + 1]
            if a == 0:
                continue
            if b == 0:
                roots.append((grid[i + 1], STABLE if a > 0 else UNSTABLE, i + 1))
            elif (a > 0) != (b > 0):
                root = optimize.bisect(residual, grid[i], grid[i + 1], rtol=FIXED_POINT_RTOL)
                roots.append((root, STABLE if a > 0 else UNSTABLE, i))

        # fix the class of exact grid hits by the sign beyond them
        fixed = []
        for root, cls, i in roots:
            if phi[i] == 0 and 0 < i < len(grid) - 1:
                below, above = phi[i - 1], phi[i + 1]
                if (below > 0) == (above > 0):
                    cls = HALF_STABLE_CLASS
                else:
                    cls = STABLE if below > 0 else UNSTABLE
            fixed.append((float(root), cls))

        suspects = []
        for i in range(1, len(grid) - 1):
            a, b, c = abs(phi[i - 1]), abs(phi[i]), abs(phi[i + 1])
            same = (phi[i - 1] > 0) == (phi[i] > 0) == (phi[i + 1] > 0)
            if same and phi[i] != 0 and b < a and b < c and b < NEAR_TOUCH * grid[i]:
                suspects.append((grid[i - 1], grid[i + 1]))

        return fixed, suspects, residual

    def fixed_points(self, policy, sigma_sq_max=None, points=FIXED_POINT_GRID):
        """
        Locates and classifies every fixed point of Psi on [0, sigma_sq_max].
        :raises SEError if sigma_sq_max is below the bound past which Psi(s) < s
        """
        bound = self.__upper_bound__()

        if sigma_sq_max is None:
            sigma_sq_max = bound
        elif sigma_sq_max < bound:
            raise SEError("sigma_sq_max should be at least {0}, got {1}".format(bound, sigma_sq_max))

        fixed, suspects, residual = self.__scan__(policy, sigma_sq_max, points)

        retry = 0
        while suspects and retry < FIXED_POINT_RETRIES:
            retry += 1
            points *= FIXED_POINT_DENSITY
            logging.warning("Fixed point scan found {0} near touches, retrying with {1} points".format(
                len(suspects), points))
            fixed, suspects, residual = self.__scan__(policy, sigma_sq_max, points)

        for lo, hi in suspects:
            touch = optimize.minimize_scalar(
                lambda s: abs(residual(s)), bounds=(lo, hi), method="bounded",
                options={"xatol": FIXED_POINT_RTOL * hi})
            if touch.fun < HALF_STABLE:
                logging.warning("Half-stable fixed point at sigma^2={0}".format(touch.x))
                fixed.append((float(touch.x), HALF_STABLE_CLASS))

        zero = self.__classify_zero__(policy)
        if zero is not None:
            if zero == HALF_STABLE_CLASS:
                logging.warning("Half-stable fixed point at sigma^2=0")
            fixed.append((0.0, zero))

        return FixedPointReport(fixed)

    def lowest_stable(self, policy, iterations=10000, tol=1e-12):
        """
        Limit of the iteration started from below; Psi >= sigma_w^2 so sigma_w^2 is a lower start.
        """
        zero = self.__classify_zero__(policy)

        if zero == STABLE:
            return 0.0

        start = self.config.sigma_w ** 2 if zero is None else self.__near_zero__()
        return self.iterate(policy, start, iterations, tol)[-1]

    def highest_stable(self, policy, iterations=10000, tol=1e-12):
        return self.iterate(policy, self.__upper_bound__(), iterations, tol)[-1]

    def derivative(self, sigma_sq, policy, relative_step=1e-4):
        step = relative_step * max(sigma_sq, 1e-12)
        lower = max(sigma_sq - step, 0.0)
        return (self.psi(sigma_sq + step, policy) - self.psi(lower, policy)) / (sigma_sq + step - lower)

    def noise_sensitivity(self, policy):
        """
        Stable fixed points per unit noise power, and d(sigma_l^2)/d(sigma_w^2) = 1 / (1 - Psi'(sigma_l^2)).
        :raises SEError in the noiseless case
        """
        noise = self.config.sigma_w ** 2

        if noise == 0:
            raise SEError("Noise sensitivity needs sigma_w > 0")

        lowest = self.lowest_stable(policy)
        highest = self.highest_stable(policy)
        slope = self.derivative(lowest, policy)

        return {
            "sigma_w": self.config.sigma_w,
            "lowest": lowest / noise,
            "highest": highest / noise,
            "derivative": 1.0 / (1.0 - slope) if slope < 1 else math.inf
        }


class SEError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message
