"""
The message passing iteration with the smoothed proximal denoiser, its Onsager correction,
the per-iteration noise estimate, and SURE based tuning of (lambda, p) from the data alone.
"""

import math
import logging
import numpy as np

from scipy import optimize

from . smooth import eta_tilde, d1_eta_tilde
from . prox import validate_exponent


DEFAULT_ITERATIONS = 50
DEFAULT_TOLERANCE = 1e-6
DEFAULT_H_EXPONENT = 1.0 / 3.0
H_FLOOR = 1e-12
DIVERGENCE_RATIO = 1e10

SURE_GRID_POINTS = 40
SURE_GRID_LOW = 1e-3
SURE_GRID_HIGH = 10.0
SURE_TOLERANCE = 1e-8


class AmpConfig(object):
    def __init__(self, iterations=DEFAULT_ITERATIONS, tol=DEFAULT_TOLERANCE,
                 h_exponent=DEFAULT_H_EXPONENT, onsager=True, x_init=None):

        if iterations < 1:
            raise AmpError("Iteration count should be positive, got {0}".format(iterations))

        self.iterations = int(iterations)
        self.tol = float(tol)
        self.h_exponent = float(h_exponent)
        self.onsager = bool(onsager)
        self.x_init = x_init


class AmpState(object):
    def __init__(self, x, z, t, sigma_hat, h_t, lambda_t=None, p_t=None):
        self.x = x
        self.z = z
        self.t = t
        self.sigma_hat = sigma_hat
        self.h_t = h_t
        self.lambda_t = lambda_t
        self.p_t = p_t


class AmpRecord(object):
    COLUMNS = ["t", "sigma_hat", "lambda", "p", "mse", "sure"]

    def __init__(self, t, sigma_hat, lam=None, p=None, mse=None, sure=None):
        self.t = t
        self.sigma_hat = sigma_hat
        self.lam = lam
        self.p = p
        self.mse = mse
        self.sure = sure

    def row(self):
        return [self.t, self.sigma_hat, self.lam, self.p, self.mse, self.sure]


class AmpRun(object):
    def __init__(self, records, state):
        self.records = records
        self.state = state

    @property
    def mse(self):
        return [r.mse for r in self.records]

    @property
    def sigma_hat(self):
        return [r.sigma_hat for r in self.records]

    def rows(self):
        return [r.row() for r in self.records]


def bandwidth(sigma_hat, N, h_exponent=DEFAULT_H_EXPONENT):
    """
    h = sigma_hat / N^h_exponent, floored so that the mollifier stays defined at sigma_hat = 0.
    """
    return max(sigma_hat / N ** h_exponent, H_FLOOR)


def sure_estimate(v, sigma_hat, p, h, lam):
    """
    Stein unbiased estimate of (1/N)||eta_tilde(v) - x_o||^2 for v = x_o + sigma_hat*Z:
    (1/N)||eta_tilde(v) - v||^2 - sigma^2 + (2 sigma^2 / N) div eta_tilde(v).
    """
    if not sigma_hat > 0:
        raise AmpError("SURE needs a positive noise estimate, got {0}".format(sigma_hat))

    v = np.asarray(v, dtype=float)
    residual = eta_tilde(v, lam, p, h) - v
    divergence = np.mean(d1_eta_tilde(v, lam, p, h))
    variance = sigma_hat ** 2

    return float(np.mean(np.square(residual)) - variance + 2.0 * variance * divergence)


class SureCurve(object):
    def __init__(self, p, h, sigma_hat, lambdas, risks):
        self.p = p
        self.h = h
        self.sigma_hat = sigma_hat
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.risks = np.asarray(risks, dtype=float)

    @property
    def best(self):
        """
        Index of the minimum, ties toward the larger lambda.
        """
        return len(self.risks) - 1 - int(np.argmin(self.risks[::-1]))

    @property
    def argmin(self):
        return float(self.lambdas[self.best])

    def quasi_convex(self):
        r = self.risks
        if len(r) < 3:
            return True
        inner = r[1:-1]
        minima = (inner < r[:-2]) & (inner <= r[2:])
        return np.count_nonzero(minima) <= 1

    def rows(self):
        return [[self.p, float(lam), float(r)] for lam, r in zip(self.lambdas, self.risks)]


def sure_curve(v, sigma_hat, p, h, lambdas):
    lambdas = np.sort(np.asarray(lambdas, dtype=float))
    risks = [sure_estimate(v, sigma_hat, p, h, lam) for lam in lambdas]

    if not np.all(np.isfinite(risks)):
        raise AmpError("SURE curve has non-finite values")

    return SureCurve(p, h, sigma_hat, lambdas, risks)


def default_lambda_grid(sigma_hat, p):
    return np.logspace(math.log10(SURE_GRID_LOW), math.log10(SURE_GRID_HIGH), SURE_GRID_POINTS) * \
        sigma_hat ** (2.0 - p)


class SureTuner(object):
    """
    Picks (lambda, p) minimizing SURE on the current pseudo-data v. Shares its interface with the
    state evolution engine, so the same optimal policies run on either.
    """

    def __init__(self, v, h, lambda_grid=None):
        self.v = np.asarray(v, dtype=float)
        self.h = h
        self.lambda_grid = lambda_grid
        self.curves = {}

    def curve(self, sigma, p):
        grid = self.lambda_grid if self.lambda_grid is not None else default_lambda_grid(sigma, p)

        if len(grid) == 0:
            raise AmpError("Lambda grid should not be empty")

        result = sure_curve(self.v, sigma, p, self.h, grid)

        if not result.quasi_convex():
            logging.warning("SURE curve is not quasi-convex for p={0}; taking the global minimum".format(p))

        self.curves[p] = result
        return result

    def __refine__(self, curve, sigma, p):
        i = curve.best
        lambdas, risks = curve.lambdas, curve.risks

        if not 0 < i < len(lambdas) - 1 or lambdas[i - 1] <= 0:
            return curve.argmin, float(risks[i])

        def objective(e):
            return sure_estimate(self.v, sigma, p, self.h, 10.0 ** e)

        bracket = (math.log10(lambdas[i - 1]), math.log10(lambdas[i]), math.log10(lambdas[i + 1]))

        try:
            found = optimize.minimize_scalar(objective, bracket=bracket, method="golden", tol=SURE_TOLERANCE)
        except ValueError:
            return curve.argmin, float(risks[i])

        if found.fun < risks[i]:
            return float(10.0 ** found.x), float(found.fun)

        return curve.argmin, float(risks[i])

    def optimal_lambda_and_risk(self, sigma, p):
        if sigma == 0:
            return 0.0, 0.0

        return self.__refine__(self.curve(sigma, p), sigma, p)

    def optimal_lambda(self, sigma, p):
        return self.optimal_lambda_and_risk(sigma, p)[0]

    def optimal_adaptation(self, sigma, p_grid):
        return select_best(self, sigma, p_grid)


def select_best(tuner, sigma, p_grid):
    """
    argmin of SURE over an exponent grid (and the tuner's lambda grid).
    :raises AmpError on an empty grid
    """
    if not p_grid:
        raise AmpError("Exponent grid should not be empty")

    # ties go to the larger exponent
    best = None
    for p in sorted(p_grid):
        validate_exponent(p)
        lam, value = tuner.optimal_lambda_and_risk(sigma, p)
        if best is None or value <= best[0]:
            best = (value, lam, float(p))

    return best[1], best[2]


def tune(state, instance, p_grid, lambda_grid=None):
    """
    SURE choice of (lambda, p) for the next update from the given state.
    :raises AmpError on empty grids
    """
    v = state.x + instance.A.T @ state.z
    return select_best(SureTuner(v, state.h_t, lambda_grid), state.sigma_hat, p_grid)


def init(instance, config=None):
    config = config or AmpConfig()

    if config.x_init is not None:
        x = np.asarray(config.x_init, dtype=float)
        if x.shape != (instance.N,):
            raise AmpError("Initial estimate should have shape ({0},), got {1}".format(instance.N, x.shape))
        x = x.copy()
    else:
        x = np.zeros(instance.N)

    z = instance.y - instance.A @ x
    sigma_hat = float(np.linalg.norm(z) / math.sqrt(instance.n))

    return AmpState(x, z, 0, sigma_hat, bandwidth(sigma_hat, instance.N, config.h_exponent))


def step(state, instance, policy, config=None):
    """
    One update: x = eta_tilde(x + A^T z), z = y - A x + (z / delta) <eta_tilde'>.
    :returns (new state, SURE value of the denoising step or None)
    :raises AmpDiverged on non-finite or exploding iterates
    """
    config = config or AmpConfig()

    v = state.x + instance.A.T @ state.z
    sigma, h = state.sigma_hat, state.h_t

    tuner = SureTuner(v, h)
    lam, p = policy.select(sigma, tuner)

    x = eta_tilde(v, lam, p, h)
    z = instance.y - instance.A @ x

    if config.onsager:
        z = z + state.z * np.mean(d1_eta_tilde(v, lam, p, h)) / instance.delta

    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise AmpDiverged("Iterates became non-finite at t={0}".format(state.t + 1))

    sigma_hat = float(np.linalg.norm(z) / math.sqrt(instance.n))

    if sigma > 0 and sigma_hat > DIVERGENCE_RATIO * sigma:
        raise AmpDiverged("Noise estimate exploded at t={0}: {1}".format(state.t + 1, sigma_hat))

    sure = sure_estimate(v, sigma, p, h, lam) if sigma > 0 else None

    return AmpState(x, z, state.t + 1, sigma_hat, bandwidth(sigma_hat, instance.N, config.h_exponent),
                    lambda_t=float(lam), p_t=float(p)), sure


def run(instance, policy, config=None):
    """
    Iterates until the noise estimate settles (relative tol) or the iteration limit is reached.
    Record 0 describes the starting point.
    """
    config = config or AmpConfig()
    state = init(instance, config)
    records = [AmpRecord(0, state.sigma_hat, mse=instance.mse(state.x))]

    for _ in range(config.iterations):
        previous = state.sigma_hat
        state, sure = step(state, instance, policy, config)

        records.append(AmpRecord(
            state.t, state.sigma_hat, state.lambda_t, state.p_t, instance.mse(state.x), sure))

        if config.tol > 0 and abs(state.sigma_hat - previous) <= config.tol * state.sigma_hat:
            logging.debug("AMP settled after {0} iterations".format(state.t))
            break

    return AmpRun(records, state)


class AmpError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message


class AmpDiverged(AmpError):
    pass
