"""
Expectations over a standard normal variable Z.

Integrands met here are piecewise smooth in Z: the proximal maps jump at +/- their
threshold. Gauss-Hermite handles smooth integrands (the nonzero part of a Gaussian prior);
everything that goes through a proximal map is integrated piece by piece, with the line
truncated at +/- cutoff and split at the known discontinuities, Gauss-Legendre on each piece.
"""

import numpy as np

from scipy.special import ndtr


MIN_ORDER = 8
DEFAULT_ORDER = 61
DEFAULT_CUTOFF = 10.0

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def normal_pdf(z):
    return INV_SQRT_2PI * np.exp(-0.5 * np.square(z))


def normal_cdf(z):
    return ndtr(z)


class NormalQuadrature(object):
    def __init__(self, order=DEFAULT_ORDER, cutoff=DEFAULT_CUTOFF):
        if order < MIN_ORDER:
            raise QuadratureError("Quadrature order should be at least {0}, got {1}".format(MIN_ORDER, order))

        if not cutoff > 0:
            raise QuadratureError("Quadrature cutoff should be positive")

        self.order = int(order)
        self.cutoff = float(cutoff)

        self.legendre_nodes, self.legendre_weights = np.polynomial.legendre.leggauss(self.order)

        x, w = np.polynomial.hermite.hermgauss(self.order)
        self.hermite_nodes = np.sqrt(2.0) * x
        self.hermite_weights = w / np.sqrt(np.pi)

    def hermite(self):
        """
        Nodes and weights with sum(w * f(z)) ~ E f(Z), for smooth f.
        """
        return self.hermite_nodes, self.hermite_weights

    def pieces(self, kinks):
        """
        Nodes and weights of the standard normal measure on [-cutoff, cutoff], split at kinks.

        :param kinks: array of shape (..., k) with the discontinuity locations in Z
        :returns z, w, both of shape (..., k + 1, order)
        """
        kinks = np.asarray(kinks, dtype=float)
        c = self.cutoff

        inner = np.clip(np.sort(kinks, axis=-1), -c, c)
        edge = np.full(inner.shape[:-1] + (1,), c)

        lower = np.concatenate([-edge, inner], axis=-1)
        upper = np.concatenate([inner, edge], axis=-1)

        half = 0.5 * (upper - lower)[..., None]
        mid = 0.5 * (upper + lower)[..., None]

        z = mid + half * self.legendre_nodes
        w = half * self.legendre_weights * normal_pdf(z)

        return z, w

    def expect(self, fn, shifts, scale, kinks):
        """
        E fn(shift + scale * Z) for every shift, with fn discontinuous only at the points
        `kinks` (given in the same units as the shifts).

        :param shifts: array of shape (m,)
        :param kinks: array of shape (m, k) or (k,)
        :returns array of shape (m,)
        """
        shifts = np.atleast_1d(np.asarray(shifts, dtype=float))

        if scale == 0:
            return fn(shifts)

        kinks = np.broadcast_to(np.asarray(kinks, dtype=float), shifts.shape + (np.shape(kinks)[-1],))
        z, w = self.pieces((kinks - shifts[:, None]) / scale)

        values = fn(shifts[:, None, None] + scale * z)
        return (w * values).sum(axis=(-1, -2))


class QuadratureError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message
