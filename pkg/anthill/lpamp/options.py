
import os

from tornado.options import define

# Main

define("config",
       default=None,
       help="Path to the JSON experiment configuration",
       type=str)

define("out",
       default=None,
       help="Output path (CSV or JSON depending on the subcommand). Standard output if not set.",
       type=str)

define("seed",
       default=None,
       help="Base random seed, overrides the 'seed' field of the configuration",
       type=int)

# Workers

define("threads",
       default=None,
       help="Size of the worker pool for independent trials. CPU count if not set.",
       group="workers",
       type=int)

# Numerics

define("quad_order",
       default=None,
       help="Gauss-Legendre order per quadrature piece (at least 8), overrides 'quad_order' of the configuration",
       group="numerics",
       type=int)

define("h_exponent",
       default=1.0 / 3.0,
       help="Smoothing bandwidth rule h = sigma_hat / N^h_exponent",
       group="numerics",
       type=float)

# Minimax curve cache

define("cache_dir",
       default=os.environ.get("LPAMP_CACHE_DIR", os.path.join(os.path.expanduser("~"), ".cache", "lpamp")),
       help="Location of the on-disk minimax curve cache",
       group="cache",
       type=str)
