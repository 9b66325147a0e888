
import os
import math
import logging
import numpy as np

from . prior import SignalPrior


class Instance(object):
    """
    A compressed sensing problem y = A x + w. x_true is known for simulated instances only.
    """

    def __init__(self, A, y, x_true=None, sigma_w=0.0):
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float)

        if A.ndim != 2:
            raise InstanceError("Measurement matrix should be two dimensional, got shape {0}".format(A.shape))

        n, N = A.shape

        if y.shape != (n,):
            raise InstanceError("Measurements should have shape ({0},), got {1}".format(n, y.shape))

        if n > N:
            raise InstanceError("Expected n <= N, got n={0}, N={1}".format(n, N))

        if x_true is not None:
            x_true = np.asarray(x_true, dtype=float)
            if x_true.shape != (N,):
                raise InstanceError("Ground truth should have shape ({0},), got {1}".format(N, x_true.shape))

        if not sigma_w >= 0:
            raise InstanceError("Noise std should be non-negative, got {0}".format(sigma_w))

        self.A = A
        self.y = y
        self.x_true = x_true
        self.sigma_w = float(sigma_w)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def N(self):
        return self.A.shape[1]

    @property
    def delta(self):
        return self.n / self.N

    def mse(self, x):
        if self.x_true is None:
            return None
        return float(np.mean(np.square(x - self.x_true)))


class InstanceSpec(object):
    def __init__(self, N, delta, prior, sigma_w=0.0, seed=0, trial=0):
        if N < 1:
            raise InstanceError("Signal length should be positive, got {0}".format(N))

        if not 0 < delta <= 1:
            raise InstanceError("Undersampling ratio should be in (0, 1], got {0}".format(delta))

        if int(math.floor(delta * N)) < 1:
            raise InstanceError("floor(delta * N) should be at least 1")

        if not sigma_w >= 0:
            raise InstanceError("Noise std should be non-negative, got {0}".format(sigma_w))

        self.N = int(N)
        self.delta = float(delta)
        self.prior = prior
        self.sigma_w = float(sigma_w)
        self.seed = int(seed)
        self.trial = int(trial)

    @property
    def n(self):
        return int(math.floor(self.delta * self.N))

    @property
    def nonzeros(self):
        return int(math.floor(self.prior.epsilon * self.N + 0.5))

    def for_trial(self, trial):
        return InstanceSpec(self.N, self.delta, self.prior, self.sigma_w, self.seed, trial)

    def dump(self):
        return {
            "N": self.N,
            "delta": self.delta,
            "prior": self.prior.dump(),
            "sigma_w": self.sigma_w,
            "seed": self.seed
        }

    @staticmethod
    def load(data, seed=0):
        try:
            return InstanceSpec(
                int(data["N"]),
                float(data["delta"]),
                SignalPrior.load(data["prior"]),
                float(data.get("sigma_w", 0.0)),
                int(data.get("seed", seed)))
        except KeyError as e:
            raise InstanceError("Instance description misses field {0}".format(e))
        except (TypeError, ValueError) as e:
            raise InstanceError("Malformed instance description: {0}".format(e))


def stream(seed, trial=0):
    """
    Independent, reproducible random stream for a (seed, trial) pair.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def generate(spec):
    """
    Draws A with iid N(0, 1/n) entries and x with exactly round(eps*N) nonzeros at uniformly
    chosen positions; y = A x + w with w iid N(0, sigma_w^2).
    """
    rng = stream(spec.seed, spec.trial)
    n, N = spec.n, spec.N
    k = spec.nonzeros

    if k == 0 and spec.prior.epsilon > 0:
        logging.warning("round(eps * N) = 0 for eps={0}, N={1}: the signal is all zeros".format(
            spec.prior.epsilon, N))

    A = rng.standard_normal((n, N)) / math.sqrt(n)

    x = np.zeros(N)
    if k > 0:
        positions = rng.choice(N, size=k, replace=False)
        x[positions] = spec.prior.nonzero.sample(rng, k)

    y = A @ x
    if spec.sigma_w > 0:
        y = y + spec.sigma_w * rng.standard_normal(n)

    return Instance(A, y, x_true=x, sigma_w=spec.sigma_w)


def read_array(path, ndmin):
    """
    Reads a .npy file or a comma separated text file.
    :raises InstanceError on unknown formats or malformed content
    """
    _, extension = os.path.splitext(path)

    try:
        if extension == ".npy":
            data = np.load(path, allow_pickle=False)
        elif extension in (".csv", ".txt"):
            data = np.loadtxt(path, delimiter=",", ndmin=ndmin)
        else:
            raise InstanceError("Unsupported file format '{0}', expected .npy or .csv".format(path))
    except ValueError as e:
        raise InstanceError("Failed to read {0}: {1}".format(path, e))

    return np.asarray(data, dtype=float)


def load_instance(matrix_path, measurements_path, truth_path=None, sigma_w=0.0):
    A = read_array(matrix_path, 2)
    y = read_array(measurements_path, 1).ravel()
    x_true = read_array(truth_path, 1).ravel() if truth_path else None
    return Instance(A, y, x_true=x_true, sigma_w=sigma_w)


class InstanceError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message
