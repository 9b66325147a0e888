
from tornado.options import options, parse_command_line
from tornado.ioloop import IOLoop
from tornado import gen

from concurrent.futures import ThreadPoolExecutor

from . import handler as h

from . model.cache import CurveCache, CacheError
from . model.minimax import Minimax, MinimaxError
from . model.quadrature import NormalQuadrature, QuadratureError
from . model.prior import PriorError
from . model.prox import ProxError, RootNotConverged
from . model.se import SEError
from . model.amp import AmpError, AmpDiverged
from . model.instance import InstanceError

from . import options as _opts

import os
import sys
import logging
import threading


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


class LpAmpApplication(object):
    """
    Wires the models together and runs experiments on a bounded worker pool.
    """

    def __init__(self, threads=None, cache_dir=None, h_exponent=1.0 / 3.0):
        self.threads = threads or os.cpu_count() or 1
        self.executor = ThreadPoolExecutor(max_workers=self.threads)
        self.cache_dir = cache_dir
        self.h_exponent = h_exponent
        self.minimax_models = {}
        self.lock = threading.Lock()

    def minimax(self, quad_order):
        """
        Shared minimax evaluator per quadrature order, backed by the curve cache when configured.
        """
        with self.lock:
            try:
                return self.minimax_models[quad_order]
            except KeyError:
                pass

            cache = CurveCache(self.cache_dir, quad_order) if self.cache_dir else None
            model = Minimax(NormalQuadrature(quad_order), cache)
            self.minimax_models[quad_order] = model
            return model

    def get_handlers(self):
        return {
            "prox-eval": h.ProxEvalHandler,
            "amp-run": h.AmpRunHandler,
            "se-run": h.SERunHandler,
            "se-fixed-points": h.SEFixedPointsHandler,
            "pt-curve": h.PTCurveHandler,
            "noise-curve": h.NoiseCurveHandler,
            "sure-curve": h.SureCurveHandler,
            "mc-compare": h.MCCompareHandler,
            "minimax-curve": h.MinimaxCurveHandler
        }

    async def submit(self, fn, *args):
        return await IOLoop.current().run_in_executor(self.executor, fn, *args)

    async def map(self, fn, arguments):
        """
        Runs fn(*args) for every entry on the worker pool; results come back in input order.
        """
        return await gen.multi([self.submit(fn, *args) for args in arguments])

    async def execute(self, config):
        """
        :returns the experiment output (CsvOutput or JsonOutput)
        """
        try:
            handler_class = self.get_handlers()[config.kind]
        except KeyError:
            raise h.ConfigError("Unknown experiment kind: {0}".format(config.kind))

        logging.info("Running '{0}' with seed {1}".format(config.kind, config.seed))
        return await handler_class(self, config).run()

    async def run(self, config):
        output = await self.execute(config)
        h.write_output(output, config.out)

    def shutdown(self):
        self.executor.shutdown(wait=True)


def subcommand(words):
    """
    ["prox", "eval"] -> "prox-eval"
    """
    kind = "-".join(words)
    if kind not in h.ExperimentConfig.KINDS:
        raise h.ConfigError("Unknown subcommand '{0}', expected one of: {1}".format(
            " ".join(words), ", ".join(k.replace("-", " ") for k in h.ExperimentConfig.KINDS)))
    return kind


def load_config(words):
    kind = subcommand(words) if words else None

    if options.config:
        config = h.ExperimentConfig.read(options.config)
        if kind is not None and kind != config.kind:
            raise h.ConfigError("Subcommand '{0}' does not match the configured kind '{1}'".format(
                " ".join(words), config.kind))
    elif kind is not None:
        config = h.ExperimentConfig(kind)
    else:
        raise h.ConfigError("Either a subcommand or --config is required")

    config.override(seed=options.seed, out=options.out, threads=options.threads, quad_order=options.quad_order)
    return config


def exit_code(error):
    if isinstance(error, (AmpDiverged, RootNotConverged)):
        return EXIT_DIVERGED
    if isinstance(error, (OSError, CacheError)):
        return EXIT_IO
    return EXIT_CONFIG


def main(args=None):
    words = parse_command_line(args)
    application = None

    try:
        config = load_config(words)
        application = LpAmpApplication(
            threads=config.threads, cache_dir=options.cache_dir, h_exponent=options.h_exponent)
        IOLoop.current().run_sync(lambda: application.run(config))
    except (h.ConfigError, PriorError, InstanceError, SEError, MinimaxError, QuadratureError,
            AmpError, ProxError, OSError, CacheError) as e:
        logging.error(str(e))
        return exit_code(e)
    finally:
        if application is not None:
            application.shutdown()

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
