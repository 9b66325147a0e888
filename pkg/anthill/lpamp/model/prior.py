
import abc
import math
import numpy as np

from scipy.special import gamma as gamma_fn


class NonzeroPart(object, metaclass=abc.ABCMeta):
    """
    Distribution G of the nonzero entries of a sparse signal, X ~ (1 - eps)*Delta_0 + eps*G.
    """

    KIND = None

    @abc.abstractmethod
    def atoms(self, quadrature):
        """
        Values and weights such that sum(w * f(v)) ~ E f(U), U ~ G.
        """
        raise NotImplementedError()

    @abc.abstractmethod
    def abs_moment(self, k):
        raise NotImplementedError()

    @abc.abstractmethod
    def sample(self, rng, size):
        raise NotImplementedError()

    @abc.abstractmethod
    def scaled(self, factor):
        raise NotImplementedError()

    @abc.abstractmethod
    def dump(self):
        raise NotImplementedError()

    def second_moment(self):
        return self.abs_moment(2)

    def min_abs(self):
        """
        Largest mu with P(|U| >= mu) = 1.
        """
        return 0.0

    def __eq__(self, other):
        return type(self) is type(other) and self.dump() == other.dump()


class PointMass(NonzeroPart):
    KIND = "point"

    def __init__(self, mu):
        if mu == 0 or not math.isfinite(mu):
            raise PriorError("Point mass should sit at a finite nonzero value, got {0}".format(mu))
        self.mu = float(mu)

    def atoms(self, quadrature):
        return np.array([self.mu]), np.array([1.0])

    def abs_moment(self, k):
        return abs(self.mu) ** k

    def min_abs(self):
        return abs(self.mu)

    def sample(self, rng, size):
        return np.full(size, self.mu)

    def scaled(self, factor):
        return PointMass(self.mu * factor)

    def dump(self):
        return {"kind": PointMass.KIND, "mu": self.mu}


class SymmetricTwoPoint(NonzeroPart):
    KIND = "two-point"

    def __init__(self, mu):
        if mu == 0 or not math.isfinite(mu):
            raise PriorError("Two-point mass should sit at +/- a finite nonzero value, got {0}".format(mu))
        self.mu = abs(float(mu))

    def atoms(self, quadrature):
        return np.array([-self.mu, self.mu]), np.array([0.5, 0.5])

    def abs_moment(self, k):
        return self.mu ** k

    def min_abs(self):
        return self.mu

    def sample(self, rng, size):
        return self.mu * rng.choice(np.array([-1.0, 1.0]), size=size)

    def scaled(self, factor):
        return SymmetricTwoPoint(self.mu * factor)

    def dump(self):
        return {"kind": SymmetricTwoPoint.KIND, "mu": self.mu}


class StandardGaussian(NonzeroPart):
    KIND = "gaussian"

    def __init__(self, std=1.0):
        if not std > 0:
            raise PriorError("Gaussian scale should be positive, got {0}".format(std))
        self.std = float(std)

    def atoms(self, quadrature):
        nodes, weights = quadrature.hermite()
        return self.std * nodes, weights

    def abs_moment(self, k):
        if k <= -1:
            return math.inf
        return self.std ** k * 2.0 ** (k / 2.0) * gamma_fn((k + 1.0) / 2.0) / math.sqrt(math.pi)

    def sample(self, rng, size):
        return self.std * rng.standard_normal(size)

    def scaled(self, factor):
        return StandardGaussian(self.std * abs(factor))

    def dump(self):
        return {"kind": StandardGaussian.KIND, "std": self.std}


class Atoms(NonzeroPart):
    KIND = "atoms"

    def __init__(self, pairs):
        if not pairs:
            raise PriorError("Atoms list should not be empty")

        values = np.array([float(v) for v, _ in pairs])
        weights = np.array([float(w) for _, w in pairs])

        if np.any(values == 0):
            raise PriorError("Nonzero part should not have an atom at zero")

        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise PriorError("Atom weights should be non-negative and sum to 1")

        self.values = values
        self.weights = weights

    def atoms(self, quadrature):
        return self.values, self.weights

    def abs_moment(self, k):
        return float((self.weights * np.abs(self.values) ** k).sum())

    def min_abs(self):
        return float(np.abs(self.values[self.weights > 0]).min())

    def sample(self, rng, size):
        return rng.choice(self.values, size=size, p=self.weights)

    def scaled(self, factor):
        return Atoms(list(zip(self.values * factor, self.weights)))

    def dump(self):
        return {
            "kind": Atoms.KIND,
            "atoms": [[float(v), float(w)] for v, w in zip(self.values, self.weights)]
        }


NONZERO_KINDS = {
    PointMass.KIND: lambda data: PointMass(data["mu"]),
    SymmetricTwoPoint.KIND: lambda data: SymmetricTwoPoint(data["mu"]),
    StandardGaussian.KIND: lambda data: StandardGaussian(data.get("std", 1.0)),
    Atoms.KIND: lambda data: Atoms(data["atoms"])
}


class SignalPrior(object):
    def __init__(self, epsilon, nonzero):
        if not 0 <= epsilon <= 1:
            raise PriorError("Nonzero fraction should be in [0, 1], got {0}".format(epsilon))

        self.epsilon = float(epsilon)
        self.nonzero = nonzero

    def atoms(self, quadrature):
        """
        Values and weights of X, the zero atom first.
        """
        if self.epsilon == 0:
            return np.zeros(1), np.ones(1)

        values, weights = self.nonzero.atoms(quadrature)

        return (
            np.concatenate([[0.0], values]),
            np.concatenate([[1.0 - self.epsilon], self.epsilon * weights]))

    def second_moment(self):
        return self.epsilon * self.nonzero.second_moment()

    def scaled(self, factor):
        return SignalPrior(self.epsilon, self.nonzero.scaled(factor))

    def dump(self):
        return {
            "epsilon": self.epsilon,
            "nonzero": self.nonzero.dump()
        }

    def __eq__(self, other):
        return isinstance(other, SignalPrior) and self.dump() == other.dump()

    @staticmethod
    def load(data):
        """
        :raises PriorError on a malformed description
        """
        try:
            epsilon = float(data["epsilon"])
            nonzero = data.get("nonzero", {"kind": SymmetricTwoPoint.KIND, "mu": 1.0})
            kind = nonzero["kind"]
        except (KeyError, TypeError, ValueError, AttributeError):
            raise PriorError("Prior should have 'epsilon' and a 'nonzero' part with a 'kind'")

        try:
            factory = NONZERO_KINDS[kind]
        except KeyError:
            raise PriorError("Unknown nonzero kind '{0}', expected one of: {1}".format(
                kind, ", ".join(sorted(NONZERO_KINDS))))

        try:
            return SignalPrior(epsilon, factory(nonzero))
        except (KeyError, TypeError, ValueError):
            raise PriorError("Malformed nonzero part: {0}".format(nonzero))


class PriorError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message
