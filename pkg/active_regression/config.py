"""
config.py

Defaults and numerical constants shared by the sampler, the basis builder,
the experiment harness and the command-line front end.

Runtime configuration is passed as command-line flags; the values below are
only the defaults those flags fall back to.
"""

TOOL_NAME = "active-regression"
TOOL_VERSION = "0.3.0"

# Linear algebra
EIG_FLOOR_REL = 1e-10
SM_DENOM_TOL = 1e-12
SYMMETRY_RTOL = 1e-12

# Basis construction
RANK_DROP_REL = 1e-10
DEFAULT_RIDGE = 0.0
FEATURE_MAPS = ("affine", "quadratic")

# Sampler
DEFAULT_C0 = 3.0
MAX_ITERS_FACTOR = 100          # hard cap = MAX_ITERS_FACTOR * d / gamma^2
TERMINATION_CONSTANT = 40       # C in k <= C * d / gamma^2
FRESH_INVERSE_MAX_DIM = 64      # above this, rank-1 updates + periodic refresh
NORM_PRESERVING_WINDOW = (0.5, 1.5)
NOISE_BUDGET = 1.5

# Data
DEFAULT_NOISE_SIGMA = 0.5
DEFAULT_TEST_FRAC = 0.2
DEFAULT_TARGET = "y"
CA_HOUSING_TARGET = "MedHouseVal"

# Reports
SCHEMA_VERSION = 1
STD_ESTIMATOR = "population"
REPORT_FORMATS = ("json", "csv", "markdown")
REPORT_COLUMNS = ("setting", "selected_mean", "selected_std", "rmse_mean", "rmse_std", "seeds")
PLOT_COLUMNS = ("k", "strategy", "rmse_mean", "rmse_std")
META_SUFFIX = ".meta.json"

# Published numbers the harness compares against: setting -> (selected, rmse)
REFERENCE_ROWS = {
    "ca_housing": {
        "full": (16512, 0.718),
        "eps=1": (113, 0.742),
        "eps=0.1": (16512, 0.718),
        "eps=0.01": (16512, 0.712),
    },
    "synthetic": {
        "full": (24000, 0.507),
        "eps=1": (139, 0.530),
        "eps=0.1": (1535, 0.510),
        "eps=0.01": (16187, 0.507),
    },
}

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4
