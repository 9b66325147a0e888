
import math
import numpy as np


ROOT_TOLERANCE = 1e-12
ROOT_MAX_ITERATIONS = 200
EPSILON = np.finfo(float).eps


class ProxParams(object):
    """
    Parameters of the proximal map of lambda*|x|^p.
    """

    def __init__(self, p, lam):
        validate_exponent(p)
        if not lam >= 0:
            raise ProxError("Regularization weight should be non-negative, got {0}".format(lam))

        self.p = float(p)
        self.lam = float(lam)

    @property
    def threshold(self):
        return float(threshold(self.lam, self.p))

    @property
    def jump(self):
        return float(jump(self.lam, self.p))

    def dump(self):
        return {
            "p": self.p,
            "lambda": self.lam
        }


class ProxEval(object):
    def __init__(self, value, active, d1=None, d2=None):
        self.value = value
        self.active = active
        self.d1 = d1
        self.d2 = d2

    def dump(self):
        return {
            "value": self.value,
            "active": self.active,
            "d1": self.d1,
            "d2": self.d2
        }


def validate_exponent(p):
    if not 0 <= p <= 1:
        raise ProxError("Penalty exponent should be in [0, 1], got {0}".format(p))


def c_p(p):
    """
    Threshold constant: eta_p(u; lambda) = 0 exactly when |u| < c_p * lambda^(1/(2-p)).
    """
    validate_exponent(p)

    if p == 1:
        return 1.0

    a = 2.0 * (1.0 - p)
    return a ** (1.0 / (2.0 - p)) + p * a ** ((p - 1.0) / (2.0 - p))


def threshold(lam, p):
    return c_p(p) * np.asarray(lam, dtype=float) ** (1.0 / (2.0 - p))


def jump(lam, p):
    """
    Smallest nonzero output magnitude, the right limit of eta_p at the threshold.
    Zero for p = 1 (soft thresholding is continuous).
    """
    lam = np.asarray(lam, dtype=float)

    if p == 1:
        return np.zeros(lam.shape)

    return (2.0 * (1.0 - p) * lam) ** (1.0 / (2.0 - p))


def zeta_star(params):
    """
    Minimizer of g(x) = x + lambda*p*x^(p-1) over x > 0; every active output is at least this large.
    :raises ProxError for p in {0, 1} or lambda = 0
    """
    p, lam = params.p, params.lam

    if not 0 < p < 1:
        raise ProxError("zeta* is defined for 0 < p < 1 only, got p={0}".format(p))

    if lam <= 0:
        raise ProxError("zeta* requires a positive lambda")

    return (1.0 / (lam * p * (1.0 - p))) ** (1.0 / (p - 2.0))


def _larger_root(a, lam, p):
    # x + lam*p*x^(p-1) = a on [jump, a]; g is increasing and convex there
    lo = np.minimum(jump(lam, p), a)
    hi = a.copy()
    x = np.clip(a - lam * p * a ** (p - 1.0), lo, hi)
    # relative to |u| so the map stays scale invariant at any magnitude
    tol = ROOT_TOLERANCE * a

    for _ in range(ROOT_MAX_ITERATIONS):
        f = x + lam * p * x ** (p - 1.0) - a
        done = (np.abs(f) <= tol) | (hi - lo <= 4.0 * EPSILON * hi)

        if np.all(done):
            return x

        hi = np.where(f > 0, x, hi)
        lo = np.where(f < 0, x, lo)

        slope = 1.0 + lam * p * (p - 1.0) * x ** (p - 2.0)
        newton = x - f / slope
        inside = (newton > lo) & (newton < hi)

        x = np.where(done, x, np.where(inside, newton, 0.5 * (lo + hi)))

    raise RootNotConverged(
        "Proximal root did not converge in {0} iterations".format(ROOT_MAX_ITERATIONS))


def _magnitude(u, lam, p):
    abs_u = np.abs(u)

    if p == 1:
        return np.maximum(abs_u - lam, 0.0)

    active = abs_u >= threshold(lam, p)

    if p == 0:
        return np.where(active, abs_u, 0.0)

    out = np.zeros(abs_u.shape)
    identity = active & (lam == 0)
    out[identity] = abs_u[identity]

    solve = active & (lam > 0)
    if np.any(solve):
        out[solve] = _larger_root(abs_u[solve], lam[solve], p)

    return out


def _broadcast(u, lam):
    u, lam = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(lam, dtype=float))
    return u, lam


def eta(u, lam, p):
    """
    Proximal map of lambda*|x|^p, applied element-wise. At |u| equal to the threshold
    the nonzero branch is returned. lambda = 0 gives the identity, lambda = inf gives zero.
    """
    validate_exponent(p)
    u, lam = _broadcast(u, lam)
    return np.sign(u) * _magnitude(u, lam, p)


def shrinkage(u, lam, p):
    """
    u - eta_p(u; lambda), computed from |u| - |eta| = lambda*p*|eta|^(p-1) on the active branch
    so that tiny perturbations of a large u are not lost to cancellation.
    """
    return eta_and_shrinkage(u, lam, p)[1]


def eta_and_shrinkage(u, lam, p):
    """
    Both eta_p(u; lambda) and u - eta_p(u; lambda) from a single root solve.
    """
    validate_exponent(p)
    u, lam = _broadcast(u, lam)
    mag = _magnitude(u, lam, p)
    active = mag > 0
    out = u.copy()

    if p == 0:
        out[active] = 0.0
    elif p == 1:
        out[active] = np.sign(u[active]) * lam[active]
    else:
        out[active] = np.sign(u[active]) * lam[active] * p * mag[active] ** (p - 1.0)

    return np.sign(u) * mag, out


def _d1_from_magnitude(mag, lam, p):
    out = np.zeros(mag.shape)
    active = (mag > 0) | (lam == 0)

    if p == 0 or p == 1:
        out[active] = 1.0
        return out

    curved = (mag > 0) & (lam > 0)
    out[lam == 0] = 1.0
    out[curved] = 1.0 / (1.0 + lam[curved] * p * (p - 1.0) * mag[curved] ** (p - 2.0))
    return out


def d1_eta(u, lam, p):
    """
    Derivative of eta_p with respect to u; zero off the active set (the a.e. derivative).
    """
    validate_exponent(p)
    u, lam = _broadcast(u, lam)
    return _d1_from_magnitude(_magnitude(u, lam, p), lam, p)


def d2_eta(u, lam, p):
    """
    Derivative of eta_p with respect to lambda; zero off the active set.
    """
    validate_exponent(p)
    u, lam = _broadcast(u, lam)
    mag = _magnitude(u, lam, p)
    d1 = _d1_from_magnitude(mag, lam, p)

    out = np.zeros(mag.shape)
    if p == 0:
        return out

    active = mag > 0
    out[active] = -p * mag[active] ** (p - 1.0) * d1[active] * np.sign(u[active])
    return out


def _check_input(u):
    if not math.isfinite(u):
        raise ProxError("Input should be finite, got {0}".format(u))


def _at_jump(u, params):
    return 0 <= params.p < 1 and params.lam > 0 and abs(u) == params.threshold


def _check_derivative(u, params):
    _check_input(u)

    if _at_jump(u, params):
        raise DerivativeUndefined("derivative undefined at the jump |u| = {0}".format(params.threshold))

    if params.lam > 0 and float(_magnitude(np.asarray(u), np.asarray(params.lam), params.p)) == 0:
        raise DerivativeUndefined("derivative undefined at inactive input u = {0}".format(u))


def eta_p(u, params):
    """
    Scalar evaluation with derivatives. Derivatives are left out (None)
    when the output is zero or u sits exactly on the jump.
    """
    _check_input(u)
    value = float(eta(u, params.lam, params.p))
    active = value != 0.0

    if not active or _at_jump(u, params):
        return ProxEval(value, active)

    return ProxEval(
        value, active,
        d1=float(d1_eta(u, params.lam, params.p)),
        d2=float(d2_eta(u, params.lam, params.p)))


def d1_eta_p(u, params):
    """
    :raises DerivativeUndefined at inactive inputs and at the jump
    """
    _check_derivative(u, params)
    return float(d1_eta(u, params.lam, params.p))


def d2_eta_p(u, params):
    """
    :raises DerivativeUndefined at inactive inputs and at the jump
    """
    _check_derivative(u, params)
    return float(d2_eta(u, params.lam, params.p))


class ProxError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message


class DerivativeUndefined(ProxError):
    pass


class RootNotConverged(ProxError):
    pass
