
from unittest import TestCase
from tornado.testing import AsyncTestCase, gen_test

from .. server import LpAmpApplication, main, subcommand, exit_code, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK
from .. handler import ExperimentConfig, ConfigError, CsvOutput, JsonOutput
from .. model.amp import AmpDiverged
from .. model.cache import CacheError
from .. model.prox import RootNotConverged
from .. model.minimax import m1, eps_star_1

import io
import os
import shutil
import tempfile
import ujson


INSTANCE = {"N": 200, "delta": 0.5, "prior": {"epsilon": 0.05}}
POLICY = {"kind": "scaled", "tau": 0.5, "p": 0.5, "power": 0.5}


def experiment(kind, **params):
    params["kind"] = kind
    return ExperimentConfig.parse(ujson.dumps(params), source="test.json")


class ExperimentConfigTestCase(TestCase):

    def test_round_trip(self):
        config = experiment("amp-run", instance=INSTANCE, policy=POLICY, iterations=5, seed=3, threads=2)
        again = ExperimentConfig.parse(config.dumps())

        self.assertEqual(again, config)
        self.assertEqual(again.seed, 3)
        self.assertEqual(again.threads, 2)
        self.assertEqual(again.params["iterations"], 5)

    def test_line_precise_errors(self):
        text = '{\n  "kind": "prox-eval",\n  "p": "a lot",\n  "lambda": 1.0\n}'
        config = ExperimentConfig.parse(text, source="exp.json")

        with self.assertRaises(ConfigError) as e:
            config.get("p")
        self.assertEqual(str(e.exception), "exp.json:3: field 'p' should be a float")

        with self.assertRaises(ConfigError) as e:
            config.get("u")
        self.assertEqual(str(e.exception), "exp.json: field 'u' is required")

    def test_error_line_skips_nested_keys(self):
        text = ('{\n  "kind": "se-run",\n  "policy": {"kind": "optimal",\n    "p": 0.5},\n'
                '  "note": "\\"p\\": here",\n  "p": [1, "x"]\n}')
        config = ExperimentConfig.parse(text, source="exp.json")

        self.assertEqual(config.line_of("p"), 6)
        self.assertEqual(config.line_of("policy"), 3)
        self.assertIsNone(config.line_of("mode"))

        with self.assertRaises(ConfigError) as e:
            config.grid("p")
        self.assertTrue(str(e.exception).startswith("exp.json:6: field 'p'"))

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig.parse("{not json")

        with self.assertRaises(ConfigError):
            ExperimentConfig.parse("[1, 2]")

        with self.assertRaises(ConfigError) as e:
            ExperimentConfig.parse('{"kind": "solve"}', source="x.json")
        self.assertIn("field 'kind'", str(e.exception))

        with self.assertRaises(ConfigError):
            ExperimentConfig.parse('{"kind": "amp-run", "seed": -1}')

        with self.assertRaises(ConfigError):
            ExperimentConfig.parse('{"kind": "amp-run", "quad_order": 4}')

        with self.assertRaises(ConfigError):
            experiment("amp-run").override(quad_order=3)

    def test_override(self):
        config = experiment("amp-run", seed=1)
        config.override(seed=7, out="result.csv", threads=None, quad_order=None)

        self.assertEqual(config.seed, 7)
        self.assertEqual(config.out, "result.csv")
        self.assertIsNone(config.threads)

    def test_grid(self):
        config = experiment("pt-curve", delta={"min": 1, "max": 100, "points": 3, "log": True}, p=[0, 1], e=[])

        grid = config.grid("delta")
        self.assertEqual(len(grid), 3)
        for value, expected in zip(grid, [1.0, 10.0, 100.0]):
            self.assertAlmostEqual(value, expected, places=10)

        self.assertEqual(config.grid("p"), [0.0, 1.0])

        with self.assertRaises(ConfigError):
            config.grid("e")

    def test_policy_and_prior(self):
        config = experiment("se-run", policy={"kind": "fixed", "p": 0.5}, prior={"epsilon": 3})

        with self.assertRaises(ConfigError):
            config.policy()

        with self.assertRaises(ConfigError):
            config.prior()

        config = experiment("amp-run", instance=INSTANCE, seed=5)
        self.assertEqual(config.instance_spec().seed, 5)


class OutputTestCase(TestCase):

    def test_csv(self):
        stream = io.StringIO()
        CsvOutput(["a", "b"], [[1, 0.1], [None, 2.5]]).write(stream)
        self.assertEqual(stream.getvalue(), "a,b\r\n1,0.1\r\n,2.5\r\n")

    def test_json(self):
        stream = io.StringIO()
        JsonOutput({"b": 1, "a": None}).write(stream)
        self.assertEqual(ujson.loads(stream.getvalue()), {"a": None, "b": 1})


class SubcommandTestCase(TestCase):

    def test_subcommand(self):
        self.assertEqual(subcommand(["prox", "eval"]), "prox-eval")
        self.assertEqual(subcommand(["se", "fixed", "points"]), "se-fixed-points")

        with self.assertRaises(ConfigError):
            subcommand(["solve"])

    def test_exit_codes(self):
        self.assertEqual(exit_code(ConfigError("bad")), EXIT_CONFIG)
        self.assertEqual(exit_code(AmpDiverged("boom")), EXIT_DIVERGED)
        self.assertEqual(exit_code(RootNotConverged("slow")), EXIT_DIVERGED)
        self.assertEqual(exit_code(OSError("gone")), EXIT_IO)
        self.assertEqual(exit_code(CacheError("full")), EXIT_IO)


class MainTestCase(TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.directory, name)

    def write(self, name, data):
        with open(self.path(name), "w") as f:
            f.write(data if isinstance(data, str) else ujson.dumps(data))
        return self.path(name)

    def main(self, config, out, *words, seed=0):
        # tornado options are global, so every call sets all of them
        return main([
            "lpamp",
            "--config={0}".format(config),
            "--out={0}".format(out),
            "--seed={0}".format(seed),
            "--threads=2",
            "--quad_order=61",
            "--cache_dir={0}".format(self.path("cache")),
            "--logging=none"
        ] + list(words))

    def test_prox_eval(self):
        config = self.write("prox.json", {"kind": "prox-eval", "p": 0.5, "lambda": 1.0, "u": [1.0, 2.0]})

        self.assertEqual(self.main(config, self.path("prox.csv")), EXIT_OK)

        with open(self.path("prox.csv")) as f:
            lines = f.read().splitlines()

        self.assertEqual(lines[0], "u,eta,active,d1,d2")
        self.assertTrue(lines[1].startswith("1.0,0.0,0,"))
        self.assertEqual(len(lines), 3)

    def test_deterministic(self):
        config = self.write("amp.json", {
            "kind": "amp-run", "instance": INSTANCE, "policy": POLICY, "iterations": 5, "tol": 0
        })

        self.assertEqual(self.main(config, self.path("first.csv"), seed=4), EXIT_OK)
        self.assertEqual(self.main(config, self.path("second.csv"), seed=4), EXIT_OK)
        self.assertEqual(self.main(config, self.path("other.csv"), seed=5), EXIT_OK)

        def content(name):
            with open(self.path(name), "rb") as f:
                return f.read()

        self.assertEqual(content("first.csv"), content("second.csv"))
        self.assertNotEqual(content("first.csv"), content("other.csv"))

    def test_config_errors(self):
        bad = self.write("bad.json", '{\n  "kind": "prox-eval",\n  "p": 2.0,\n  "lambda": 1.0,\n  "u": [1]\n}')
        self.assertEqual(self.main(bad, self.path("bad.csv")), EXIT_CONFIG)

        malformed = self.write("malformed.json", "{")
        self.assertEqual(self.main(malformed, self.path("bad.csv")), EXIT_CONFIG)

        self.assertEqual(self.main(bad, self.path("bad.csv"), "amp", "run"), EXIT_CONFIG)
        self.assertEqual(self.main("", self.path("bad.csv")), EXIT_CONFIG)

        # no parameters at all
        self.assertEqual(self.main("", self.path("bad.csv"), "prox", "eval"), EXIT_CONFIG)

    def test_io_errors(self):
        self.assertEqual(self.main(self.path("missing.json"), self.path("out.csv")), EXIT_IO)

        config = self.write("prox.json", {"kind": "prox-eval", "p": 0.5, "lambda": 1.0, "u": [1.0]})
        self.assertEqual(self.main(config, self.path("no/such/dir/out.csv")), EXIT_IO)


class HandlersTestCase(AsyncTestCase):

    def setUp(self):
        super(HandlersTestCase, self).setUp()
        self.directory = tempfile.mkdtemp()
        self.application = LpAmpApplication(threads=2, cache_dir=self.directory)

    def tearDown(self):
        self.application.shutdown()
        shutil.rmtree(self.directory, ignore_errors=True)
        super(HandlersTestCase, self).tearDown()

    @gen_test(timeout=60)
    async def test_prox_eval(self):
        output = await self.application.execute(
            experiment("prox-eval", p=0.5, **{"lambda": 1.0}, u=[1.0, 1.5, 2.0], h=0.1))

        self.assertEqual(output.columns, ["u", "eta", "active", "d1", "d2", "eta_tilde", "d1_tilde"])
        self.assertEqual(output.rows[0][1:3], [0.0, 0])
        self.assertIsNone(output.rows[1][3])
        self.assertAlmostEqual(output.rows[2][1], 1.60538, places=4)
        self.assertAlmostEqual(output.rows[1][5], 0.5, places=9)

    @gen_test(timeout=60)
    async def test_prox_eval_rejects_exponent(self):
        with self.assertRaises(ConfigError):
            await self.application.execute(experiment("prox-eval", p=2.0, **{"lambda": 1.0}, u=[1.0]))

    @gen_test(timeout=120)
    async def test_amp_run(self):
        output = await self.application.execute(
            experiment("amp-run", instance=INSTANCE, policy=POLICY, iterations=4, tol=0))

        self.assertEqual(output.columns, ["t", "sigma_hat", "lambda", "p", "mse", "sure"])
        self.assertEqual(len(output.rows), 5)
        self.assertEqual(output.rows[-1][0], 4)

    @gen_test(timeout=120)
    async def test_se_run(self):
        prior = {"epsilon": 0.1}
        output = await self.application.execute(experiment(
            "se-run", delta=0.5, sigma_w=0.1, prior=prior, policy={"kind": "optimal", "p": 1.0}, iterations=5))

        self.assertEqual(output.columns, ["t", "sigma_sq", "mse"])
        self.assertAlmostEqual(output.rows[0][1], 0.1 / 0.5 + 0.01, places=14)
        self.assertAlmostEqual(output.rows[0][2], 0.1, places=14)

        output = await self.application.execute(experiment(
            "se-run", delta=0.5, prior=prior, policy=POLICY, mode="psi", sigma_sq=[0.1, 0.2]))
        self.assertEqual([row[0] for row in output.rows], [0.1, 0.2])

        with self.assertRaises(ConfigError):
            await self.application.execute(experiment(
                "se-run", delta=0.5, prior=prior, policy=POLICY, mode="sideways"))

    @gen_test(timeout=120)
    async def test_se_fixed_points(self):
        output = await self.application.execute(experiment(
            "se-fixed-points", delta=0.5, sigma_w=0.1, prior={"epsilon": 0.1},
            policy={"kind": "optimal", "p": 1.0}, points=200))

        self.assertIsInstance(output, JsonOutput)
        self.assertEqual(len([p for p in output.data["fixed_points"] if p["class"] == "stable"]), 1)
        self.assertIsNotNone(output.data["lowest_stable"])

        with self.assertRaises(ConfigError):
            await self.application.execute(experiment(
                "se-fixed-points", delta=0.5, sigma_w=0.1, prior={"epsilon": 0.1},
                policy={"kind": "optimal", "p": 1.0}, sigma_sq_max=0.01))

    @gen_test(timeout=120)
    async def test_pt_curve(self):
        output = await self.application.execute(experiment(
            "pt-curve", delta=[0.3], p=[1.0], continuation=True))

        self.assertEqual(output.columns, ["delta", "p", "eps_bar", "eps_under"])
        self.assertEqual(len(output.rows), 2)
        self.assertAlmostEqual(output.rows[0][2], eps_star_1(0.3), places=12)
        self.assertEqual(output.rows[1][1], "sup")

    @gen_test(timeout=300)
    async def test_minimax_curve(self):
        output = await self.application.execute(experiment("minimax-curve", epsilon=[0.1], p=[1.0]))

        epsilon, p, upper, lower, gap = output.rows[0]
        self.assertAlmostEqual(upper, m1(0.1), places=6)
        self.assertGreaterEqual(gap, -1e-6)
        self.assertTrue(os.path.isfile(os.path.join(self.directory, "m_bar-q61.json")))

    @gen_test(timeout=300)
    async def test_noise_curve(self):
        output = await self.application.execute(experiment(
            "noise-curve", delta=0.5, prior={"epsilon": 0.05}, sigma_w_grid=[0.05], p=[1.0], bound=True))

        sigma_w, p, lowest, highest, derivative, bound = output.rows[0]
        self.assertLessEqual(lowest, highest * (1.0 + 1e-9))
        self.assertLessEqual(highest, bound + 1e-6)
        self.assertGreater(derivative, 1.0)

    @gen_test(timeout=120)
    async def test_sure_curve(self):
        output = await self.application.execute(experiment(
            "sure-curve", instance=INSTANCE, policy=POLICY, iteration=2, p=[0.5, 1.0], **{"lambda": [0.01, 0.1, 0.5]}))

        self.assertEqual(len(output.rows), 6)
        for p, lam, sure, risk in output.rows:
            self.assertIn(p, [0.5, 1.0])
            self.assertIsNotNone(risk)

    @gen_test(timeout=120)
    async def test_mc_compare(self):
        output = await self.application.execute(experiment(
            "mc-compare", instance=INSTANCE, policy=POLICY, seeds=3, iterations=3))

        self.assertEqual(output.columns, ["t", "se_mse", "mc_mean", "ci_lo", "ci_hi"])
        self.assertEqual(len(output.rows), 4)

        for t, predicted, mean, lo, hi in output.rows:
            self.assertLessEqual(lo, mean)
            self.assertLessEqual(mean, hi)

        with self.assertRaises(ConfigError):
            await self.application.execute(experiment("mc-compare", instance=INSTANCE, policy=POLICY, seeds=0))
