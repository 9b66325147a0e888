
from scipy import stats

from . model import prox, smooth, amp
from . model.se import SEConfig, StateEvolution, Policy, OptimalLambdaPolicy, OptimalAdaptationPolicy, SEError
from . model.prior import SignalPrior, PriorError
from . model.prox import ProxParams, ProxError
from . model.minimax import MinimaxError, eps_star_1, encode
from . model.instance import InstanceSpec, InstanceError, generate, load_instance, read_array
from . model.quadrature import DEFAULT_ORDER, MIN_ORDER

import re
import csv
import sys
import math
import logging
import ujson
import numpy as np


MISSING = object()
KEY_SEPARATOR = re.compile(r"\s*:")


class ExperimentConfig(object):
    """
    One experiment: a kind plus its parameters, read from a single JSON document.
    Top level 'seed', 'out', 'threads' and 'quad_order' can be overridden from the command line.
    """

    KINDS = [
        "prox-eval", "amp-run", "se-run", "se-fixed-points", "pt-curve",
        "noise-curve", "sure-curve", "mc-compare", "minimax-curve"
    ]

    def __init__(self, kind, params=None, seed=0, out=None, threads=None, quad_order=None,
                 source="<config>", text=None):
        self.kind = kind
        self.params = params or {}
        self.seed = seed
        self.out = out
        self.threads = threads
        self.quad_order = quad_order
        self.source = source
        self.text = text

    @staticmethod
    def read(path):
        """
        :raises OSError if the file cannot be read, ConfigError if it is not a valid config
        """
        with open(path, "r") as f:
            return ExperimentConfig.parse(f.read(), source=path)

    @staticmethod
    def parse(text, source="<config>"):
        try:
            data = ujson.loads(text)
        except ValueError as e:
            raise ConfigError("{0}: malformed JSON: {1}".format(source, e))

        if not isinstance(data, dict):
            raise ConfigError("{0}: configuration should be a JSON object".format(source))

        config = ExperimentConfig(None, source=source, text=text)

        kind = data.pop("kind", None)
        if kind not in ExperimentConfig.KINDS:
            raise config.error("kind", "should be one of: {0}".format(", ".join(ExperimentConfig.KINDS)))

        config.kind = kind
        config.seed = config.__top__(data, "seed", 0, 0)
        config.threads = config.__top__(data, "threads", None, 1)
        config.quad_order = config.__top__(data, "quad_order", None, MIN_ORDER)

        out = data.pop("out", None)
        if out is not None and not isinstance(out, str):
            raise config.error("out", "should be a path")

        config.out = out
        config.params = data
        return config

    def __top__(self, data, key, default, minimum):
        value = data.pop(key, default)
        if value is None:
            return None
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            raise self.error(key, "should be an integer >= {0}".format(minimum))
        return value

    def override(self, seed=None, out=None, threads=None, quad_order=None):
        if seed is not None:
            self.seed = seed
        if out is not None:
            self.out = out
        if threads is not None:
            self.threads = threads
        if quad_order is not None:
            if quad_order < MIN_ORDER:
                raise ConfigError("--quad-order should be at least {0}".format(MIN_ORDER))
            self.quad_order = quad_order

    def dump(self):
        result = dict(self.params)
        result["kind"] = self.kind
        result["seed"] = self.seed
        for key in ("out", "threads", "quad_order"):
            value = getattr(self, key)
            if value is not None:
                result[key] = value
        return result

    def dumps(self):
        return ujson.dumps(self.dump(), indent=2, sort_keys=True)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.dump() == other.dump()

    def line_of(self, key):
        """
        Line of the top level "key": entry in the configuration text; keys of nested
        objects are skipped.
        """
        text = self.text
        if not text:
            return None

        depth, line, i = 0, 1, 0
        while i < len(text):
            c = text[i]
            if c == "\n":
                line += 1
            elif c == '"':
                end = i + 1
                while end < len(text) and text[end] != '"':
                    end += 2 if text[end] == "\\" else 1
                if depth == 1 and text[i + 1:end] == key and KEY_SEPARATOR.match(text, end + 1):
                    return line
                i = end
            elif c in "{[":
                depth += 1
            elif c in "}]":
                depth -= 1
            i += 1

        return None

    def error(self, key, message):
        line = self.line_of(key)
        where = self.source if line is None else "{0}:{1}".format(self.source, line)
        return ConfigError("{0}: field '{1}' {2}".format(where, key, message))

    def get(self, key, cast=float, default=MISSING):
        try:
            value = self.params[key]
        except KeyError:
            if default is MISSING:
                raise self.error(key, "is required")
            return default

        if cast is None:
            return value

        try:
            return cast(value)
        except (TypeError, ValueError):
            raise self.error(key, "should be a {0}".format(cast.__name__))

    def grid(self, key, default=MISSING):
        """
        A list of numbers, or {"min": a, "max": b, "points": k, "log": bool}.
        """
        value = self.get(key, None, default)

        try:
            if isinstance(value, dict):
                points = int(value["points"])
                lo, hi = float(value["min"]), float(value["max"])
                if value.get("log", False):
                    result = np.logspace(math.log10(lo), math.log10(hi), points)
                else:
                    result = np.linspace(lo, hi, points)
                result = [float(v) for v in result]
            else:
                result = [float(v) for v in value]
        except (KeyError, TypeError, ValueError):
            raise self.error(key, "should be a list of numbers or a {min, max, points} range")

        if not result:
            raise self.error(key, "should not be empty")

        return result

    def prior(self, key="prior"):
        try:
            return SignalPrior.load(self.get(key, None))
        except PriorError as e:
            raise self.error(key, str(e))

    def policy(self, key="policy", default=MISSING):
        data = self.get(key, None, default)
        if data is None or isinstance(data, Policy):
            return data
        try:
            return Policy.load(data)
        except (SEError, ProxError, AttributeError) as e:
            raise self.error(key, "is malformed: {0}".format(e))

    def instance_spec(self, key="instance"):
        data = self.get(key, None)
        try:
            return InstanceSpec.load(dict(data, seed=self.seed))
        except (InstanceError, PriorError, TypeError, ValueError) as e:
            raise self.error(key, str(e))


class CsvOutput(object):
    def __init__(self, columns, rows):
        self.columns = columns
        self.rows = rows

    @staticmethod
    def cell(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)
        return value

    def write(self, stream):
        writer = csv.writer(stream)
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([CsvOutput.cell(v) for v in row])


class JsonOutput(object):
    def __init__(self, data):
        self.data = data

    def write(self, stream):
        stream.write(ujson.dumps(self.data, indent=2, sort_keys=True))
        stream.write("\n")


def write_output(output, path):
    if path is None:
        output.write(sys.stdout)
        return

    with open(path, "w", newline="") as f:
        output.write(f)


class ExperimentHandler(object):
    def __init__(self, application, config):
        self.application = application
        self.config = config

    @property
    def quad_order(self):
        return self.config.quad_order or DEFAULT_ORDER

    def se_config(self):
        config = self.config
        try:
            return SEConfig(
                config.get("delta"), config.get("sigma_w", float, 0.0), config.prior(), self.quad_order)
        except SEError as e:
            raise ConfigError("{0}: {1}".format(config.source, e))

    def amp_config(self):
        config = self.config
        x_init = config.get("x_init", str, None)
        return amp.AmpConfig(
            iterations=config.get("iterations", int, amp.DEFAULT_ITERATIONS),
            tol=config.get("tol", float, amp.DEFAULT_TOLERANCE),
            h_exponent=self.application.h_exponent,
            onsager=config.get("onsager", bool, True),
            x_init=read_array(x_init, 1).ravel() if x_init else None)

    def instance(self, trial=0):
        config = self.config
        files = config.get("files", None, None)

        if files is not None:
            try:
                return load_instance(
                    files["A"], files["y"], files.get("x"), float(config.get("sigma_w", float, 0.0)))
            except (KeyError, TypeError):
                raise config.error("files", "should have 'A' and 'y' paths")

        return generate(config.instance_spec().for_trial(trial))

    async def run(self):
        raise NotImplementedError()


class ProxEvalHandler(ExperimentHandler):
    """
    Evaluates the proximal map (and the smoothed one when 'h' is given) on a list of inputs.
    Columns: u, eta, active, d1, d2[, eta_tilde, d1_tilde]
    """

    async def run(self):
        config = self.config

        try:
            params = ProxParams(config.get("p"), config.get("lambda"))
        except ProxError as e:
            raise config.error("p", str(e))

        inputs = config.grid("u")
        h = config.get("h", float, None)

        columns = ["u", "eta", "active", "d1", "d2"]
        if h is not None:
            if not h > 0:
                raise config.error("h", "should be positive")
            columns += ["eta_tilde", "d1_tilde"]

        rows = []
        for u in inputs:
            result = prox.eta_p(u, params)
            row = [u, result.value, int(result.active), result.d1, result.d2]
            if h is not None:
                row += [
                    float(smooth.eta_tilde(u, params.lam, params.p, h)),
                    float(smooth.d1_eta_tilde(u, params.lam, params.p, h))
                ]
            rows.append(row)

        return CsvOutput(columns, rows)


class AmpRunHandler(ExperimentHandler):
    """
    One AMP run on a generated or loaded instance.
    Columns: t, sigma_hat, lambda, p, mse, sure
    """

    async def run(self):
        instance = self.instance()
        policy = self.config.policy()

        result = await self.application.submit(amp.run, instance, policy, self.amp_config())
        return CsvOutput(amp.AmpRecord.COLUMNS, result.rows())


class SERunHandler(ExperimentHandler):
    """
    State evolution trajectory (mode 'trajectory', columns t, sigma_sq, mse)
    or the map itself on a grid (mode 'psi', columns sigma_sq, psi).
    """

    async def run(self):
        config = self.config
        se_config = self.se_config()
        engine = StateEvolution(se_config)
        policy = config.policy()

        mode = config.get("mode", str, "trajectory")

        if mode == "psi":
            grid = config.grid("sigma_sq")
            return CsvOutput(["sigma_sq", "psi"], engine.psi_curve(policy, grid))

        if mode != "trajectory":
            raise config.error("mode", "should be 'trajectory' or 'psi'")

        start = config.get("sigma0_sq", float, engine.second_moment / se_config.delta + se_config.sigma_w ** 2)
        trajectory = engine.iterate(
            policy, start, config.get("iterations", int, 100), config.get("tol", float, 1e-10))

        return CsvOutput(["t", "sigma_sq", "mse"], [
            [t, s, se_mse(trajectory, t, se_config, engine.second_moment)]
            for t, s in enumerate(trajectory)
        ])


def se_mse(trajectory, t, se_config, second_moment):
    """
    MSE of the estimate after t iterations predicted by the trajectory: delta*(sigma_t^2 - sigma_w^2).
    """
    if t == 0:
        return second_moment
    return se_config.delta * (trajectory[t] - se_config.sigma_w ** 2)


class SEFixedPointsHandler(ExperimentHandler):
    async def run(self):
        config = self.config
        engine = StateEvolution(self.se_config())

        try:
            report = engine.fixed_points(
                config.policy(),
                config.get("sigma_sq_max", float, None),
                config.get("points", int, 2000))
        except SEError as e:
            raise config.error("sigma_sq_max", str(e))

        return JsonOutput(report.dump())


class PTCurveHandler(ExperimentHandler):
    """
    Phase transition curves on a delta grid for every p.
    Columns: delta, p, eps_bar, eps_under (empty unless 'under' is set), and a p = "sup" row
    per delta with the continuation curve when 'continuation' is set.
    """

    async def run(self):
        config = self.config
        deltas = config.grid("delta")
        exponents = config.grid("p")
        tol = config.get("tol", float, 1e-6)
        under = config.get("under", bool, False)
        continuation = config.get("continuation", bool, False)

        minimax = self.application.minimax(self.quad_order)

        def point(delta, p):
            try:
                if p == 1:
                    bar = eps_star_1(delta)
                    return [delta, p, bar, bar if under else None]
                bar = minimax.eps_star_p(delta, p, "bar", tol)
                lower = minimax.eps_star_p(delta, p, "under", tol) if under else None
            except (MinimaxError, ProxError) as e:
                raise config.error("p", str(e))
            return [delta, p, bar, lower]

        rows = await self.application.map(point, [(d, p) for d in deltas for p in exponents])

        if continuation:
            for delta in deltas:
                best = max(row[2] for row in rows if row[0] == delta)
                rows.append([delta, "sup", best, None])

        return CsvOutput(["delta", "p", "eps_bar", "eps_under"], rows)


class MinimaxCurveHandler(ExperimentHandler):
    """
    Columns: epsilon, p, m_bar, m_under, gap
    """

    async def run(self):
        config = self.config
        epsilons = config.grid("epsilon")
        exponents = config.grid("p")
        minimax = self.application.minimax(self.quad_order)

        def point(epsilon, p):
            try:
                result = minimax.saddle(p, epsilon)
                lower = result.value - result.gap
            except (MinimaxError, ProxError) as e:
                raise config.error("epsilon", str(e))
            return [epsilon, p, result.value, lower, result.gap]

        rows = await self.application.map(point, [(e, p) for e in epsilons for p in exponents])
        return CsvOutput(["epsilon", "p", "m_bar", "m_under", "gap"], rows)


class NoiseCurveHandler(ExperimentHandler):
    """
    Noise sensitivity of the optimally tuned iteration for every p on a sigma_w grid.
    Columns: sigma_w, p, lowest, highest, derivative, bound
    """

    async def run(self):
        config = self.config
        se_config = self.se_config()
        noises = config.grid("sigma_w_grid")
        exponents = config.grid("p")
        adaptive = config.get("adaptive", bool, False)
        with_bound = config.get("bound", bool, False)

        policies = [(p, OptimalLambdaPolicy(p)) for p in exponents]
        if adaptive:
            policies.append(("adaptive", OptimalAdaptationPolicy(exponents)))

        minimax = self.application.minimax(self.quad_order)

        def bound(p):
            if not with_bound or p == "adaptive":
                return None
            try:
                return minimax.noise_sensitivity_bound(se_config.delta, se_config.prior.epsilon, p)
            except MinimaxError:
                return math.inf

        bounds = {p: bound(p) for p, _ in policies}

        def point(sigma_w, p, policy):
            engine = StateEvolution(se_config.with_noise(sigma_w))
            try:
                result = engine.noise_sensitivity(policy)
            except SEError as e:
                raise config.error("sigma_w_grid", str(e))
            return [sigma_w, p, result["lowest"], result["highest"], result["derivative"], encode(bounds[p])]

        rows = await self.application.map(point, [(s, p, policy) for s in noises for p, policy in policies])
        return CsvOutput(["sigma_w", "p", "lowest", "highest", "derivative", "bound"], rows)


class SureCurveHandler(ExperimentHandler):
    """
    SURE against lambda at a given iteration (after iteration - 1 updates with the policy).
    Columns: p, lambda, sure, risk (true risk, when the ground truth is known)
    """

    async def run(self):
        config = self.config
        instance = self.instance()
        policy = config.policy()
        iteration = config.get("iteration", int, 3)
        exponents = config.grid("p")
        lambdas = config.grid("lambda", None)

        if iteration < 1:
            raise config.error("iteration", "should be at least 1")

        amp_config = self.amp_config()

        def curves():
            state = amp.init(instance, amp_config)
            for _ in range(iteration - 1):
                state, _ = amp.step(state, instance, policy, amp_config)

            if not state.sigma_hat > 0:
                raise config.error("iteration", "reaches a zero noise estimate")

            v = state.x + instance.A.T @ state.z
            rows = []
            for p in exponents:
                grid = lambdas if lambdas is not None else amp.default_lambda_grid(state.sigma_hat, p)
                curve = amp.sure_curve(v, state.sigma_hat, p, state.h_t, grid)
                for p_value, lam, sure in curve.rows():
                    risk = None
                    if instance.x_true is not None:
                        risk = instance.mse(smooth.eta_tilde(v, lam, p, state.h_t))
                    rows.append([p_value, lam, sure, risk])
            return rows

        rows = await self.application.submit(curves)
        return CsvOutput(["p", "lambda", "sure", "risk"], rows)


class MCCompareHandler(ExperimentHandler):
    """
    Mean AMP error over independent trials against the state evolution prediction.
    Columns: t, se_mse, mc_mean, ci_lo, ci_hi (95% t-interval)
    """

    async def run(self):
        config = self.config
        seeds = config.get("seeds", int, 1)
        if seeds < 1:
            raise config.error("seeds", "should be at least 1")

        spec = config.instance_spec()
        policy = config.policy()
        amp_config = self.amp_config()
        amp_config.tol = 0.0

        logging.info("Running {0} trials of {1} iterations".format(seeds, amp_config.iterations))

        se_config = SEConfig(spec.delta, spec.sigma_w, spec.prior, self.quad_order)
        engine = StateEvolution(se_config)
        start = engine.second_moment / spec.delta + spec.sigma_w ** 2
        trajectory = engine.iterate(policy, start, amp_config.iterations, tol=0.0)

        def trial(index):
            instance = generate(spec.for_trial(index))
            return index, amp.run(instance, policy, amp_config).mse

        results = dict(await self.application.map(trial, [(i,) for i in range(seeds)]))
        errors = np.array([results[i] for i in range(seeds)], dtype=float)

        mean = errors.mean(axis=0)
        if seeds > 1:
            half = stats.t.ppf(0.975, seeds - 1) * errors.std(axis=0, ddof=1) / math.sqrt(seeds)
        else:
            half = np.zeros(mean.shape)

        rows = []
        for t in range(errors.shape[1]):
            predicted = se_mse(trajectory, t, se_config, engine.second_moment) if t < len(trajectory) else None
            rows.append([t, predicted, float(mean[t]), float(mean[t] - half[t]), float(mean[t] + half[t])])

        return CsvOutput(["t", "se_mse", "mc_mean", "ci_lo", "ci_hi"], rows)


class ConfigError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message
