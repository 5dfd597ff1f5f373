"""
bench.py

Experiment harness: epsilon sweeps (selected count and test RMSE per epsilon
against the label-everything fit), k sweeps pairing each BSS draw count with
uniform sampling at the same k, aggregation over seeds and report emission.

Every (seed, setting) cell is independent. Its sampler stream is derived from
(seed, cell index), so the aggregated rows do not depend on the number of
workers or the order in which cells finish.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from active_regression.basis import FeatureBasis, FeatureMap, build_basis, eval_basis_matrix
from active_regression.config import (
    DEFAULT_C0,
    DEFAULT_TEST_FRAC,
    META_SUFFIX,
    PLOT_COLUMNS,
    REPORT_COLUMNS,
    REPORT_FORMATS,
    SCHEMA_VERSION,
    STD_ESTIMATOR,
)
from active_regression.data import Dataset, rmse, split, standardize, subset
from active_regression.erm import fit_full, fit_weighted, predict_many
from active_regression.errors import ActiveRegressionError, DomainError, IoError
from active_regression.sampler import SelectionResult, select_bss, select_uniform
from active_regression.utilities import canonical_json, derive_seed, write_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepCell:
    seed: int
    setting: str
    epsilon: float | None = None
    k: int | None = None
    selected: int | None = None
    rmse: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class SweepRow:
    """
    One aggregated report line. A setting in which every cell failed is kept
    with seeds = 0 and NaN statistics so the failure stays visible.
    """

    setting: str
    selected_mean: float
    selected_std: float
    rmse_mean: float
    rmse_std: float
    seeds: int
    epsilon: float | None = None
    k: float | None = None
    strategy: str | None = None
    cells: tuple[SweepCell, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class _Prepared:
    pool: Dataset
    test: Dataset
    basis: FeatureBasis
    V_pool: np.ndarray


def eps_label(epsilon: float) -> str:
    return f"eps={epsilon:g}"


def _prepare(ds: Dataset, seed: int, test_frac: float, feature_map: str, ridge: float,
             standardize_features: bool) -> _Prepared:
    parts = split(ds, test_frac, seed)
    pool, test = subset(ds, parts.pool_indices), subset(ds, parts.test_indices)
    if standardize_features:
        pool, test = standardize(pool, test)
    # whitening sees the pool only
    basis = build_basis(pool.features, FeatureMap(feature_map, ds.p), ridge)
    return _Prepared(pool, test, basis, eval_basis_matrix(basis, pool.features))


def _selection_rmse(prep: _Prepared, selection: SelectionResult, ridge: float) -> float:
    indices = selection.indices
    model = fit_weighted(prep.V_pool[indices], prep.pool.targets[indices], selection.weight_vector, ridge,
                         prep.basis.basis_id)
    return rmse(predict_many(model, prep.basis, prep.test.features), prep.test.targets)


def _full_rmse(prep: _Prepared) -> float:
    model = fit_full(prep.V_pool, prep.pool.targets, prep.basis.basis_id)
    return rmse(predict_many(model, prep.basis, prep.test.features), prep.test.targets)


def _failed(seed: int, setting: str, error: Exception, epsilon: float | None = None) -> SweepCell:
    logger.warning("Cell (seed=%d, %s) failed: %s", seed, setting, error)
    return SweepCell(seed=seed, setting=setting, epsilon=epsilon, error=f"{type(error).__name__}: {error}")


def _run_seeds(run_one, seeds: list[int], workers: int, progress: bool, desc: str) -> list[list[SweepCell]]:
    if workers < 1:
        raise DomainError("workers must be >= 1.")
    if workers == 1:
        return [run_one(seed) for seed in tqdm(seeds, desc=desc, disable=not progress)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(tqdm(executor.map(run_one, seeds), total=len(seeds), desc=desc, disable=not progress))


def _stats(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    return float(np.mean(arr)), float(np.std(arr, ddof=0))


def _aggregate(setting: str, cells: list[SweepCell], **extra) -> SweepRow:
    done = [c for c in cells if c.ok]
    selected_mean, selected_std = _stats([c.selected for c in done])
    rmse_mean, rmse_std = _stats([c.rmse for c in done])
    row = SweepRow(setting, selected_mean, selected_std, rmse_mean, rmse_std, len(done), cells=tuple(cells), **extra)
    logger.info("%s: selected %.1f (+- %.2f), rmse %.4f (+- %.4f) over %d seeds",
                setting, selected_mean, selected_std, rmse_mean, rmse_std, len(done))
    return row


def _check_lists(eps_list, seeds) -> None:
    if not eps_list or not seeds:
        raise DomainError("eps_list and seeds must be non-empty.")
    for epsilon in eps_list:
        if not 0 < epsilon <= 1:
            raise DomainError(f"epsilon must lie in (0, 1], got {epsilon}")


def epsilon_sweep(
    ds: Dataset,
    eps_list: list[float],
    seeds: list[int],
    test_frac: float = DEFAULT_TEST_FRAC,
    c0: float = DEFAULT_C0,
    feature_map: str = "affine",
    ridge: float = 0.0,
    standardize_features: bool = False,
    workers: int = 1,
    progress: bool = True,
) -> list[SweepRow]:
    """
    Runs the full fit and one BSS selection per epsilon for every seed.

    Args:
        ds: Labeled dataset; its labels are revealed only for selected pool points.
        eps_list: Accuracy parameters in (0, 1].
        seeds: Seeds; each one fixes a split and the sampler streams.
        test_frac: Held-out fraction.
        c0: Sampler constant.
        feature_map: 'affine' or 'quadratic'.
        ridge: Ridge used for the basis and for the weighted fits.
        standardize_features: Z-score features with pool statistics first.
        workers: Seeds run concurrently on this many threads.
        progress: Show a tqdm bar.

    Returns:
        A 'full' row followed by one 'eps=<v>' row per epsilon.
    """
    _check_lists(eps_list, seeds)

    def run_one(seed: int) -> list[SweepCell]:
        settings = ["full"] + [eps_label(e) for e in eps_list]
        try:
            prep = _prepare(ds, seed, test_frac, feature_map, ridge, standardize_features)
        except ActiveRegressionError as e:
            return [_failed(seed, s, e) for s in settings]
        cells = []
        try:
            cells.append(SweepCell(seed, "full", selected=prep.pool.n, k=prep.pool.n, rmse=_full_rmse(prep)))
        except ActiveRegressionError as e:
            cells.append(_failed(seed, "full", e))
        for index, epsilon in enumerate(eps_list):
            setting = eps_label(epsilon)
            try:
                selection = select_bss(prep.V_pool, epsilon, derive_seed(seed, index), c0)
                cells.append(SweepCell(seed, setting, epsilon, selection.iterations, selection.distinct_count,
                                       _selection_rmse(prep, selection, ridge)))
            except ActiveRegressionError as e:
                cells.append(_failed(seed, setting, e, epsilon))
        return cells

    per_seed = _run_seeds(run_one, list(seeds), workers, progress, "epsilon sweep")
    rows = [_aggregate("full", [cells[0] for cells in per_seed])]
    for index, epsilon in enumerate(eps_list):
        rows.append(_aggregate(eps_label(epsilon), [cells[index + 1] for cells in per_seed], epsilon=epsilon))
    return rows


def k_sweep_vs_uniform(
    ds: Dataset,
    eps_list_for_k: list[float],
    seeds: list[int],
    test_frac: float = DEFAULT_TEST_FRAC,
    c0: float = DEFAULT_C0,
    feature_map: str = "affine",
    ridge: float = 0.0,
    standardize_features: bool = False,
    workers: int = 1,
    progress: bool = True,
) -> list[SweepRow]:
    """
    For each epsilon, takes the number of BSS draws k and compares against k
    uniform draws from the same pool.

    Returns:
        Pairs of rows 'k=<v>/bss' and 'k=<v>/uniform' where v is the BSS draw
        count averaged over seeds, in the order of eps_list_for_k.
    """
    _check_lists(eps_list_for_k, seeds)
    m = len(eps_list_for_k)

    def run_one(seed: int) -> list[SweepCell]:
        try:
            prep = _prepare(ds, seed, test_frac, feature_map, ridge, standardize_features)
        except ActiveRegressionError as e:
            return [_failed(seed, f"{eps_label(eps)}/{s}", e, eps) for eps in eps_list_for_k for s in ("bss", "uniform")]
        cells = []
        for index, epsilon in enumerate(eps_list_for_k):
            try:
                bss = select_bss(prep.V_pool, epsilon, derive_seed(seed, index), c0)
                cells.append(SweepCell(seed, f"{eps_label(epsilon)}/bss", epsilon, bss.iterations, bss.distinct_count,
                                       _selection_rmse(prep, bss, ridge)))
            except ActiveRegressionError as e:
                cells.append(_failed(seed, f"{eps_label(epsilon)}/bss", e, epsilon))
                cells.append(_failed(seed, f"{eps_label(epsilon)}/uniform", e, epsilon))
                continue
            try:
                uniform = select_uniform(prep.pool.n, bss.iterations, derive_seed(seed, m + index))
                cells.append(SweepCell(seed, f"{eps_label(epsilon)}/uniform", epsilon, uniform.iterations,
                                       uniform.distinct_count, _selection_rmse(prep, uniform, ridge)))
            except ActiveRegressionError as e:
                cells.append(_failed(seed, f"{eps_label(epsilon)}/uniform", e, epsilon))
        return cells

    per_seed = _run_seeds(run_one, list(seeds), workers, progress, "k sweep")
    rows = []
    for index, epsilon in enumerate(eps_list_for_k):
        bss_cells = [cells[2 * index] for cells in per_seed]
        uniform_cells = [cells[2 * index + 1] for cells in per_seed]
        ks = [c.k for c in bss_cells if c.ok]
        k_mean = float(np.mean(ks)) if ks else math.nan
        label = f"k={round(k_mean)}" if ks else f"k=?({eps_label(epsilon)})"
        for strategy, cells in (("bss", bss_cells), ("uniform", uniform_cells)):
            rows.append(_aggregate(f"{label}/{strategy}", cells, epsilon=epsilon, k=k_mean, strategy=strategy))
    return rows


def _number(value):
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


def row_to_json(row: SweepRow) -> dict:
    obj = {column: getattr(row, column) for column in REPORT_COLUMNS}
    for column in ("selected_mean", "selected_std", "rmse_mean", "rmse_std"):
        obj[column] = _number(obj[column])
    obj.update(epsilon=row.epsilon, k=_number(row.k), strategy=row.strategy)
    obj["cells"] = [asdict(cell) for cell in row.cells]
    return obj


def reference_deviation(rows: list[SweepRow], reference: dict) -> list[dict]:
    """
    Compares rows against published (selected, rmse) pairs keyed by setting.

    Returns:
        One note per matching setting with the relative RMSE difference; the
        notes flag data-dependent rows, they do not judge them.
    """
    notes = []
    for row in rows:
        if row.setting not in reference or row.seeds == 0:
            continue
        published_selected, published_rmse = reference[row.setting]
        notes.append({
            "setting": row.setting,
            "selected": row.selected_mean,
            "published_selected": published_selected,
            "rmse": row.rmse_mean,
            "published_rmse": published_rmse,
            "rmse_rel_diff": (row.rmse_mean - published_rmse) / published_rmse,
            "data_dependent": True,
        })
    return notes


def _from_number(value) -> float:
    return math.nan if value is None else float(value)


def _fmt(value: float, digits: int) -> str:
    return "n/a" if math.isnan(value) else f"{value:.{digits}f}"


def render_markdown(rows: list[SweepRow]) -> str:
    lines = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    for row in rows:
        cells = [row.setting, _fmt(row.selected_mean, 1), _fmt(row.selected_std, 2), _fmt(row.rmse_mean, 4),
                 _fmt(row.rmse_std, 4), str(row.seeds)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _write_text(text: str, path: str) -> None:
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise IoError(f"Could not write {path}: {e}") from e


def emit_report(rows: list[SweepRow], format: str, path: str, meta: dict | None = None) -> None:
    """
    Writes aggregated rows as JSON (with per-seed cells and failures), CSV or a
    markdown table.

    Args:
        rows: Sweep rows.
        format: One of 'json', 'csv', 'markdown'.
        path: Output file.
        meta: Artifact metadata. JSON reports carry it under "meta", markdown
            reports open with it as an HTML comment and CSV reports get a
            `<path>.meta.json` sidecar.
    """
    if format not in REPORT_FORMATS:
        raise DomainError(f"Unknown report format {format!r}; expected one of {REPORT_FORMATS}")
    if format == "json":
        failures = [asdict(cell) for row in rows for cell in row.cells if not cell.ok]
        document = {
            "schema_version": SCHEMA_VERSION,
            "std_estimator": STD_ESTIMATOR,
            "meta": meta or {},
            "columns": list(REPORT_COLUMNS),
            "rows": [row_to_json(row) for row in rows],
            "failures": failures,
        }
        write_json(document, path)
    elif format == "csv":
        frame = pd.DataFrame([[getattr(row, c) for c in REPORT_COLUMNS] for row in rows], columns=list(REPORT_COLUMNS))
        _write_text(frame.to_csv(index=False), path)
        _write_sidecar(meta, path)
    else:
        header = f"<!-- {canonical_json(meta)} -->\n\n" if meta else ""
        _write_text(header + render_markdown(rows), path)


def _write_sidecar(meta: dict | None, path: str) -> None:
    if meta:
        write_json(meta, f"{path}{META_SUFFIX}")


def emit_plot_data(rows: list[SweepRow], path: str, meta: dict | None = None) -> None:
    """Writes (k, strategy, rmse_mean, rmse_std) for every row of a k sweep, plus a metadata sidecar."""
    records = [[row.k, row.strategy, row.rmse_mean, row.rmse_std] for row in rows if row.strategy is not None]
    frame = pd.DataFrame(records, columns=list(PLOT_COLUMNS))
    _write_text(frame.to_csv(index=False), path)
    _write_sidecar(meta, path)


def rows_from_json(document: dict) -> list[SweepRow]:
    """Reads rows back from a JSON report."""
    rows = []
    for obj in document["rows"]:
        cells = tuple(SweepCell(**cell) for cell in obj.get("cells", []))
        rows.append(SweepRow(obj["setting"], _from_number(obj["selected_mean"]), _from_number(obj["selected_std"]),
                             _from_number(obj["rmse_mean"]), _from_number(obj["rmse_std"]), int(obj["seeds"]),
                             obj.get("epsilon"), obj.get("k"), obj.get("strategy"), cells))
    return rows
