"""
cli.py

Command-line front end: generate data, select samples, fit, evaluate, run the
whole active-learning pipeline, sweep epsilon or k, and run property suites.

Usage examples (from the repository root):

    python -m active_regression gen --n 30000 --p 10 --seed 7 --out data/synth.csv
    python -m active_regression select --data data/synth.csv --epsilon 0.5 --seed 1 --out runs/sel.json
    python -m active_regression fit --data data/synth.csv --selection runs/sel.json --out runs/model.json
    python -m active_regression eval --data data/synth.csv --model runs/model.json
    python -m active_regression sweep --data data/synth.csv --eps-list 1,0.1,0.01 --seeds 0-9 --out runs/sweep.md
    python -m active_regression verify --suite sampler --trials 100 --seed 0
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass

from active_regression import bench, data
from active_regression.basis import FeatureMap, basis_from_json, basis_to_json, build_basis, eval_basis_matrix
from active_regression.config import (
    DEFAULT_C0,
    DEFAULT_NOISE_SIGMA,
    DEFAULT_RIDGE,
    DEFAULT_TARGET,
    DEFAULT_TEST_FRAC,
    EXIT_OK,
    FEATURE_MAPS,
    REFERENCE_ROWS,
    REPORT_FORMATS,
    TOOL_NAME,
    TOOL_VERSION,
)
from active_regression.erm import fit_full, fit_weighted, model_from_json, model_to_json, predict_many
from active_regression.errors import (
    ActiveRegressionError,
    SchemaError,
    ShapeError,
    UsageError,
    VerificationFailure,
)
from active_regression.sampler import select_bss, selection_from_json, selection_to_json
from active_regression.utilities import artifact_meta, parse_float_list, parse_seed_list, read_json, write_json
from active_regression.verification import SUITES, run_suite

logger = logging.getLogger(__name__)

GEN_KINDS = ("linear", "quadratic", "anisotropic", "make_regression")


@dataclass(frozen=True)
class CliConfig:
    """Resolved subcommand and flags (defaults included)."""

    command: str
    flags: dict

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        flags = {key: value for key, value in sorted(vars(args).items()) if key not in ("command", "func")}
        return cls(args.command, flags)

    def meta(self) -> dict:
        return artifact_meta(self.command, self.flags)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _load(cfg: CliConfig) -> data.Dataset:
    return data.load_csv(cfg.flags["data"], cfg.flags["target"])


def _embedded_basis(obj: dict, path: str):
    if "basis" not in obj:
        raise SchemaError(f"{path} does not embed the basis it was built with.")
    return basis_from_json(obj["basis"])


def cmd_gen(cfg: CliConfig) -> int:
    f = cfg.flags
    if f["kind"] == "linear":
        ds = data.synth_regression(f["n"], f["p"], f["noise"], f["seed"])
    elif f["kind"] == "quadratic":
        ds = data.synth_quadratic(f["n"], f["p"], f["width"], f["noise"], f["seed"])
    elif f["kind"] == "anisotropic":
        ds = data.synth_anisotropic(f["n"], f["p"], f["spread"], f["noise"], f["seed"])
    else:
        ds = data.synth_make_regression(f["n"], f["p"], f["noise"], f["seed"])
    data.write_csv(ds, f["out"], f["target"])
    write_json({**ds.provenance, "meta": cfg.meta()}, f"{f['out']}.provenance.json")
    print(f"Wrote {ds.n} rows x {ds.p} features to {f['out']}")
    return EXIT_OK


def cmd_select(cfg: CliConfig) -> int:
    f = cfg.flags
    ds = _load(cfg)
    basis = build_basis(ds.features, FeatureMap(f["map"], ds.p), f["ridge"])
    V = eval_basis_matrix(basis, ds.features)
    selection = select_bss(V, f["epsilon"], f["seed"], f["c0"], f["max_iters"])
    write_json(selection_to_json(selection, cfg.meta(), basis_to_json(basis)), f["out"])
    print(f"Selected {selection.distinct_count} distinct of {ds.n} pool points in {selection.iterations} rounds; "
          f"gram eigenvalues [{selection.gram_extremes.lambda_min:.4f}, {selection.gram_extremes.lambda_max:.4f}]")
    return EXIT_OK


def cmd_fit(cfg: CliConfig) -> int:
    f = cfg.flags
    ds = _load(cfg)
    obj = read_json(f["selection"])
    basis = _embedded_basis(obj, f["selection"])
    selection = selection_from_json(obj)
    indices = selection.indices
    if indices.size and indices.max() >= ds.n:
        raise ShapeError(f"Selection refers to row {indices.max()} but {f['data']} has {ds.n} rows.")
    model = fit_weighted(eval_basis_matrix(basis, ds.features[indices]), ds.targets[indices],
                         selection.weight_vector, f["ridge"], basis.basis_id)
    write_json(model_to_json(model, cfg.meta(), basis_to_json(basis)), f["out"])
    print(f"Fitted {model.dim} coefficients on {indices.size} labeled points; residual norm {model.residual_norm:.6g}")
    return EXIT_OK


def cmd_eval(cfg: CliConfig) -> int:
    f = cfg.flags
    ds = _load(cfg)
    obj = read_json(f["model"])
    basis = _embedded_basis(obj, f["model"])
    model = model_from_json(obj)
    parts = data.split(ds, f["test_frac"], f["split_seed"])
    test = data.subset(ds, parts.test_indices)
    result = {"rmse": data.rmse(predict_many(model, basis, test.features), test.targets), "n_test": test.n}
    print(json.dumps(result, indent=2))
    if f["out"]:
        write_json({**result, "meta": cfg.meta()}, f["out"])
    return EXIT_OK


def cmd_pipeline(cfg: CliConfig) -> int:
    """Split, whiten on the pool, select with BSS, label, fit and report test RMSE."""
    f = cfg.flags
    ds = _load(cfg)
    split_seed = f["seed"] if f["split_seed"] is None else f["split_seed"]
    parts = data.split(ds, f["test_frac"], split_seed)
    pool, test = data.subset(ds, parts.pool_indices), data.subset(ds, parts.test_indices)
    if f["standardize"]:
        pool, test = data.standardize(pool, test)
    basis = build_basis(pool.features, FeatureMap(f["map"], ds.p), f["ridge"])
    V = eval_basis_matrix(basis, pool.features)
    selection = select_bss(V, f["epsilon"], f["seed"], f["c0"], f["max_iters"])
    indices = selection.indices
    model = fit_weighted(V[indices], pool.targets[indices], selection.weight_vector, f["ridge"], basis.basis_id)
    full = fit_full(V, pool.targets, basis.basis_id)
    result = {
        "rmse": data.rmse(predict_many(model, basis, test.features), test.targets),
        "full_rmse": data.rmse(predict_many(full, basis, test.features), test.targets),
        "selected": selection.distinct_count,
        "iterations": selection.iterations,
        "pool_size": pool.n,
        "n_test": test.n,
    }
    print(json.dumps(result, indent=2))
    if f["out"]:
        write_json({**result, "selection": selection_to_json(selection), "model": model_to_json(model),
                    "basis": basis_to_json(basis), "meta": cfg.meta()}, f["out"])
    return EXIT_OK


def _sweep_options(f: dict) -> dict:
    return {
        "test_frac": f["test_frac"],
        "c0": f["c0"],
        "feature_map": f["map"],
        "ridge": f["ridge"],
        "standardize_features": f["standardize"],
        "workers": f["workers"],
        "progress": not f["quiet"],
    }


def _report(cfg: CliConfig, rows: list[bench.SweepRow]) -> None:
    f = cfg.flags
    meta = cfg.meta()
    if f["reference"] != "none":
        meta["reference_deviation"] = bench.reference_deviation(rows, REFERENCE_ROWS[f["reference"]])
    print(bench.render_markdown(rows), end="")
    if f["out"]:
        bench.emit_report(rows, f["format"], f["out"], meta)
        print(f"Report written to {f['out']}")


def cmd_sweep(cfg: CliConfig) -> int:
    f = cfg.flags
    rows = bench.epsilon_sweep(_load(cfg), f["eps_list"], f["seeds"], **_sweep_options(f))
    _report(cfg, rows)
    return EXIT_OK


def cmd_ksweep(cfg: CliConfig) -> int:
    f = cfg.flags
    rows = bench.k_sweep_vs_uniform(_load(cfg), f["eps_list"], f["seeds"], **_sweep_options(f))
    _report(cfg, rows)
    if f["plot_out"]:
        bench.emit_plot_data(rows, f["plot_out"], cfg.meta())
        print(f"Plot data written to {f['plot_out']}")
    return EXIT_OK


def cmd_verify(cfg: CliConfig) -> int:
    f = cfg.flags
    names = list(SUITES) if f["suite"] == "all" else [f["suite"]]
    reports = [run_suite(name, f["trials"], f["seed"], progress=not f["quiet"]) for name in names]
    for report in reports:
        print(f"\n--- Suite: {report.suite} ({report.trials} trials, seed {report.seed}) ---")
        for check in report.checks:
            status = "PASS" if check.passed else "FAIL"
            print(f"  [{status}] {check.name:<42} statistic={check.statistic:.6g} threshold={check.threshold:.6g}"
                  f"  {check.detail}")
    if f["out"]:
        write_json({"meta": cfg.meta(), "suites": [r.to_json() for r in reports]}, f["out"])
    failed = [f"{r.suite}/{c.name}" for r in reports for c in r.checks if not c.passed]
    if failed:
        raise VerificationFailure(f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return EXIT_OK


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=str, required=True, help="CSV file with a header row")
    parser.add_argument("--target", type=str, default=DEFAULT_TARGET, help="Target column name")


def _add_basis_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--map", type=str, choices=FEATURE_MAPS, default="affine")
    parser.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)


def _add_sweep_args(parser: argparse.ArgumentParser) -> None:
    _add_data_args(parser)
    _add_basis_args(parser)
    parser.add_argument("--eps-list", type=parse_float_list, default=[1.0, 0.1, 0.01], help="e.g., '1,0.1,0.01'")
    parser.add_argument("--seeds", type=parse_seed_list, default=list(range(10)), help="e.g., '0,1,2' or '0-9'")
    parser.add_argument("--test-frac", type=float, default=DEFAULT_TEST_FRAC)
    parser.add_argument("--c0", type=float, default=DEFAULT_C0)
    parser.add_argument("--standardize", action="store_true", help="Z-score features with pool statistics")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--format", type=str, choices=REPORT_FORMATS, default="markdown")
    parser.add_argument("--reference", type=str, choices=("none", *REFERENCE_ROWS), default="none",
                        help="Published rows to compare against in the report metadata")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--quiet", action="store_true", help="Warnings only, no progress bars")

    parser = _Parser(prog=TOOL_NAME, description="Active learning for regression by randomized BSS sampling.")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="Generate a synthetic dataset")
    p.add_argument("--kind", type=str, choices=GEN_KINDS, default="linear")
    p.add_argument("--n", type=int, default=30000)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--noise", type=float, default=DEFAULT_NOISE_SIGMA)
    p.add_argument("--width", type=int, default=4, help="Hidden width of the quadratic network")
    p.add_argument("--spread", type=float, default=1000.0, help="Ratio of largest to smallest feature variance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", type=str, default=DEFAULT_TARGET)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("select", parents=[common], help="Select pool points with BSS")
    _add_data_args(p)
    _add_basis_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c0", type=float, default=DEFAULT_C0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fit", parents=[common], help="Fit weighted least squares on a selection")
    _add_data_args(p)
    p.add_argument("--selection", type=str, required=True)
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="Test RMSE of a fitted model")
    _add_data_args(p)
    p.add_argument("--model", type=str, required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--test-frac", type=float, default=DEFAULT_TEST_FRAC)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common], help="Split, select, fit and evaluate in one run")
    _add_data_args(p)
    _add_basis_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=None, help="Defaults to --seed")
    p.add_argument("--test-frac", type=float, default=DEFAULT_TEST_FRAC)
    p.add_argument("--c0", type=float, default=DEFAULT_C0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep", parents=[common], help="Epsilon sweep against the full fit")
    _add_sweep_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ksweep", parents=[common], help="BSS vs uniform sampling at equal k")
    _add_sweep_args(p)
    p.add_argument("--plot-out", type=str, default=None, help="Plot-ready CSV (k, strategy, rmse_mean, rmse_std)")
    p.set_defaults(func=cmd_ksweep)

    p = sub.add_parser("verify", parents=[common], help="Run property suites")
    p.add_argument("--suite", type=str, choices=(*SUITES, "all"), required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def run(argv: list[str] | None = None) -> int:
    """
    Parses argv, prints the resolved configuration and runs the subcommand.

    Returns:
        Process exit code: 0 success, 1 usage, 2 data or schema, 3 numerical,
        4 verification failure.
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:  # --help and --version
        return int(e.code or 0)

    _configure_logging(args.verbose, args.quiet)
    cfg = CliConfig.from_args(args)
    print(json.dumps({"command": cfg.command, **cfg.flags}, indent=2))
    try:
        return args.func(cfg)
    except ActiveRegressionError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


def main() -> None:
    sys.exit(run())
