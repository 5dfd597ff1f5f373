"""
data.py

Dataset ingestion and export (CSV), synthetic regression generators, seeded
pool/test splitting, feature standardization and the RMSE metric.
"""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.datasets import make_regression
from sklearn.metrics import mean_squared_error

from active_regression.config import DEFAULT_TARGET
from active_regression.errors import DomainError, IoError, SchemaError, ShapeError
from active_regression.utilities import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    source: str
    provenance: dict | None = field(default=None)

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise ShapeError(f"Dataset needs n >= 1 rows and p >= 1 features, got {self.features.shape}")
        if self.targets.shape != (self.features.shape[0],):
            raise ShapeError("Targets must be a vector with one entry per row.")
        if len(self.feature_names) != self.features.shape[1]:
            raise ShapeError("One feature name per column is required.")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Split:
    pool_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    test_frac: float


def _to_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return math.nan


def load_csv(path: str, target_column: str = DEFAULT_TARGET) -> Dataset:
    """
    Loads a comma-separated file with a header row.

    Rows with a non-numeric or non-finite cell are dropped and counted. Numbers
    are parsed with correctly rounded conversion, so a file written by
    write_csv loads back bit for bit.

    Args:
        path: CSV file.
        target_column: Name of the column holding the targets.

    Returns:
        Dataset with every other column as a feature, in file order.
    """
    if not os.path.isfile(path):
        raise IoError(f"File {path} not found.")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise SchemaError(f"Could not parse {path}: {e}") from e
    if target_column not in frame.columns:
        raise SchemaError(f"Target column {target_column!r} not found in {path}; columns are {list(frame.columns)}")
    feature_names = tuple(c for c in frame.columns if c != target_column)
    if not feature_names:
        raise SchemaError(f"{path} has no feature columns besides {target_column!r}.")

    raw_targets = frame[target_column].str.strip()
    targets = raw_targets.map(_to_float).to_numpy(dtype=float)
    text = np.isnan(targets) & ~raw_targets.str.lower().isin(["", "nan", "na"]).to_numpy()
    if np.any(text):
        row = int(np.flatnonzero(text)[0])
        raise SchemaError(
            f"Target column {target_column!r} holds non-numeric value {raw_targets.iloc[row]!r} (data row {row + 1})."
        )
    features = frame[list(feature_names)].apply(lambda col: col.map(_to_float)).to_numpy(dtype=float)

    finite = np.all(np.isfinite(features), axis=1) & np.isfinite(targets)
    rejected = int(np.count_nonzero(~finite))
    if rejected:
        logger.warning("Dropped %d of %d rows of %s with non-numeric or non-finite cells", rejected, len(finite), path)
    if rejected == len(finite):
        raise SchemaError(f"No usable rows in {path}.")
    return Dataset(
        features=features[finite],
        targets=targets[finite],
        feature_names=feature_names,
        source=os.path.abspath(path),
        provenance={"rejected_rows": rejected},
    )


def write_csv(ds: Dataset, path: str, target_column: str = DEFAULT_TARGET) -> None:
    """Writes features and targets with 17 significant digits (exact round trip)."""
    frame = pd.DataFrame(ds.features, columns=list(ds.feature_names))
    frame[target_column] = ds.targets
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")
    except OSError as e:
        raise IoError(f"Could not write {path}: {e}") from e


def _check_synth(n: int, p: int, noise_sigma: float) -> None:
    if n < 1 or p < 1:
        raise DomainError("n and p must be positive.")
    if noise_sigma < 0:
        raise DomainError("noise_sigma must be >= 0.")


def _names(p: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(p))


def synth_regression(n: int, p: int, noise_sigma: float, seed: int) -> Dataset:
    """
    Linear target over standard-normal features.

    Args:
        n: Number of rows.
        p: Number of features.
        noise_sigma: Standard deviation of the additive Gaussian noise.
        seed: 64-bit seed.

    Returns:
        Dataset whose provenance records the hidden weights w_star.
    """
    _check_synth(n, p, noise_sigma)
    rng = make_rng(seed)
    w_star = rng.standard_normal(p)
    X = rng.standard_normal((n, p))
    y = X @ w_star + noise_sigma * rng.standard_normal(n)
    provenance = {"kind": "linear", "seed": int(seed), "n": n, "p": p, "noise_sigma": float(noise_sigma),
                  "w_star": [float(w) for w in w_star]}
    return Dataset(X, y, _names(p), f"synthetic:linear:{seed}", provenance)


def synth_anisotropic(n: int, p: int, spread: float, noise_sigma: float, seed: int) -> Dataset:
    """
    Linear target over Gaussian features whose variances are log-spaced from
    1 to `spread`.
    """
    _check_synth(n, p, noise_sigma)
    if spread < 1:
        raise DomainError("spread must be >= 1.")
    rng = make_rng(seed)
    w_star = rng.standard_normal(p)
    scales = np.sqrt(np.logspace(0.0, math.log10(spread), p))
    X = rng.standard_normal((n, p)) * scales
    y = X @ w_star + noise_sigma * rng.standard_normal(n)
    provenance = {"kind": "anisotropic", "seed": int(seed), "n": n, "p": p, "spread": float(spread),
                  "noise_sigma": float(noise_sigma), "w_star": [float(w) for w in w_star]}
    return Dataset(X, y, _names(p), f"synthetic:anisotropic:{seed}", provenance)


def synth_quadratic(n: int, p: int, width: int, noise_sigma: float, seed: int) -> Dataset:
    """
    Target computed by a two-layer network with quadratic activation,
    f(x) = (1 / sqrt(m)) sum_r a_r (w_r^T x)^2, with W ~ N(0, 1) and a_r = +-1.

    Every such f lies in the span of the quadratic feature map.
    """
    _check_synth(n, p, noise_sigma)
    if width < 1:
        raise DomainError("width must be positive.")
    rng = make_rng(seed)
    W = rng.standard_normal((width, p))
    a = rng.choice([-1.0, 1.0], size=width)
    X = rng.standard_normal((n, p))
    clean = ((X @ W.T) ** 2) @ a / math.sqrt(width)
    y = clean + noise_sigma * rng.standard_normal(n)
    provenance = {"kind": "quadratic", "seed": int(seed), "n": n, "p": p, "width": width,
                  "noise_sigma": float(noise_sigma), "W": W.tolist(), "a": a.tolist()}
    return Dataset(X, y, _names(p), f"synthetic:quadratic:{seed}", provenance)


def quadratic_target(provenance: dict, X) -> np.ndarray:
    """Noise-free value of the planted quadratic network recorded in provenance."""
    W = np.asarray(provenance["W"], dtype=float)
    a = np.asarray(provenance["a"], dtype=float)
    return ((np.asarray(X, dtype=float) @ W.T) ** 2) @ a / math.sqrt(W.shape[0])


def synth_make_regression(n: int, p: int, noise_sigma: float, seed: int) -> Dataset:
    """scikit-learn's make_regression generator, with its true coefficients kept as w_star."""
    _check_synth(n, p, noise_sigma)
    X, y, coef = make_regression(
        n_samples=n, n_features=p, n_informative=p, noise=noise_sigma, coef=True,
        random_state=int(seed) % 2**32,
    )
    provenance = {"kind": "make_regression", "seed": int(seed), "n": n, "p": p, "noise_sigma": float(noise_sigma),
                  "w_star": [float(w) for w in coef]}
    return Dataset(X, y, _names(p), f"synthetic:make_regression:{seed}", provenance)


def split(ds: Dataset | int, test_frac: float, seed: int) -> Split:
    """
    Seeded uniform pool/test split; the first round(test_frac * n) entries of a
    random permutation form the test side. Both index sets are returned sorted.

    Args:
        ds: Dataset, or the number of rows.
        test_frac: Fraction of rows held out, 0 < test_frac < 1.
        seed: 64-bit seed.
    """
    n = ds if isinstance(ds, int) else ds.n
    if not 0 < test_frac < 1:
        raise DomainError(f"test_frac must lie in (0, 1), got {test_frac}")
    n_test = int(round(test_frac * n))
    if n_test == 0 or n_test == n:
        raise DomainError(f"test_frac = {test_frac} leaves an empty side when splitting {n} rows.")
    order = make_rng(seed).permutation(n)
    return Split(np.sort(order[n_test:]), np.sort(order[:n_test]), int(seed), float(test_frac))


def subset(ds: Dataset, indices) -> Dataset:
    indices = np.asarray(indices, dtype=int)
    return Dataset(ds.features[indices], ds.targets[indices], ds.feature_names, ds.source, ds.provenance)


def standardize(train: Dataset, other: Dataset) -> tuple[Dataset, Dataset]:
    """
    Z-scores the features of both datasets with the mean and standard deviation
    of `train`. Targets are left in their original units.
    """
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)

    def apply(ds: Dataset) -> Dataset:
        return Dataset((ds.features - mean) / std, ds.targets, ds.feature_names, ds.source, ds.provenance)

    return apply(train), apply(other)


def rmse(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=float).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if predictions.shape != targets.shape:
        raise ShapeError(f"{predictions.shape[0]} predictions for {targets.shape[0]} targets")
    if predictions.size == 0:
        raise ShapeError("rmse needs at least one value.")
    return float(np.sqrt(mean_squared_error(targets, predictions)))
