"""
Smoothed proximal map: the continuous part of eta_p plus its jump mollified by a Gaussian kernel
of bandwidth h. Unlike eta_p it is Lipschitz in u, which is what the message passing update and
the SURE divergence need.
"""

import numpy as np

from . prox import ProxParams, ProxError, eta, d1_eta, threshold, jump, validate_exponent
from . quadrature import normal_cdf, normal_pdf


class SmoothProxParams(object):
    def __init__(self, base, h):
        if not h > 0:
            raise ProxError("Smoothing bandwidth should be positive, got {0}".format(h))

        self.base = base
        self.h = float(h)

    @staticmethod
    def of(p, lam, h):
        return SmoothProxParams(ProxParams(p, lam), h)

    def dump(self):
        result = self.base.dump()
        result["h"] = self.h
        return result


def _jump_terms(lam, p):
    lam = np.asarray(lam, dtype=float)
    finite = np.isfinite(lam)
    safe = np.where(finite, lam, 0.0)
    return threshold(safe, p), jump(safe, p), finite


def s_part(u, lam, p):
    """
    Continuous part of eta_p: eta_p(u) - sign(u) * jump on the active set, zero elsewhere.
    """
    validate_exponent(p)
    u = np.asarray(u, dtype=float)
    value = eta(u, lam, p)
    _, size, _ = _jump_terms(lam, p)
    return np.where(value != 0, value - np.sign(u) * size, 0.0)


def d_tilde(u, lam, p, h):
    """
    Jump part of eta_p convolved with a N(0, h^2) kernel. Odd in u and bounded by the jump size.
    """
    validate_exponent(p)
    u = np.asarray(u, dtype=float)
    cut, size, finite = _jump_terms(lam, p)

    value = size * (normal_cdf((u - cut) / h) - normal_cdf((-cut - u) / h))
    return np.where(finite, value, 0.0)


def eta_tilde(u, lam, p, h):
    return s_part(u, lam, p) + d_tilde(u, lam, p, h)


def d1_eta_tilde(u, lam, p, h):
    """
    Derivative of eta_tilde with respect to u. At u = +/- threshold the active-side
    derivative of the continuous part is used.
    """
    validate_exponent(p)
    u = np.asarray(u, dtype=float)
    cut, size, finite = _jump_terms(lam, p)

    bump = (size / h) * (normal_pdf((u - cut) / h) + normal_pdf((u + cut) / h))
    return d1_eta(u, lam, p) + np.where(finite, bump, 0.0)


def eta_tilde_p(u, params):
    """
    Scalar evaluation for a SmoothProxParams.
    """
    return float(eta_tilde(u, params.base.lam, params.base.p, params.h))


def d1_eta_tilde_p(u, params):
    return float(d1_eta_tilde(u, params.base.lam, params.base.p, params.h))
