"""
erm.py

Weighted least squares in basis space, prediction, the label-everything
baseline and the sampling probabilities for weight-proportional SGD.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from active_regression.basis import FeatureBasis, eval_basis, eval_basis_matrix
from active_regression.core_linalg import eig_extremes, solve_psd
from active_regression.errors import BasisMismatchError, DomainError, RankError, ShapeError, SingularMatrixError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RegressionModel:
    alpha: np.ndarray
    basis_id: str
    gram_lambda_min: float
    residual_norm: float

    @property
    def dim(self) -> int:
        return self.alpha.shape[0]


def fit_weighted(V_sel, y, u, ridge: float = 0.0, basis_id: str = "") -> RegressionModel:
    """
    Minimizes sum_i u_i (alpha^T v_i - y_i)^2 + ridge ||alpha||^2.

    Args:
        V_sel: k x d basis evaluations of the labeled points.
        y: Labels, length k.
        u: Positive importance weights, length k.
        ridge: Non-negative regularization.
        basis_id: Identifier of the basis V_sel was evaluated in.

    Returns:
        RegressionModel with alpha = (A^T A + ridge I)^{-1} A^T y_u, where A has
        rows sqrt(u_i) v_i and y_u entries sqrt(u_i) y_i.
    """
    V_sel = np.asarray(V_sel, dtype=float)
    if V_sel.ndim == 1:
        V_sel = V_sel.reshape(-1, 1)
    y = np.asarray(y, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    k, d = V_sel.shape
    if k < 1:
        raise ShapeError("At least one labeled point is needed.")
    if y.shape[0] != k or u.shape[0] != k:
        raise ShapeError(f"{k} rows, {y.shape[0]} labels and {u.shape[0]} weights do not match.")
    if np.any(u <= 0) or not np.all(np.isfinite(u)):
        raise DomainError("Weights must be positive and finite.")
    if ridge < 0:
        raise DomainError("ridge must be >= 0.")

    root = np.sqrt(u)
    A = V_sel * root[:, None]
    y_u = y * root
    gram = A.T @ A + ridge * np.eye(d)
    try:
        alpha = solve_psd(gram, A.T @ y_u)
    except SingularMatrixError as e:
        if ridge == 0:
            raise RankError(f"Weighted Gram of {k} labeled points is singular; refit with ridge > 0. ({e})") from e
        raise
    residual = float(np.linalg.norm(A @ alpha - y_u))
    extremes = eig_extremes(gram)
    logger.debug("weighted fit: k=%d d=%d lambda_min=%.4g residual=%.4g", k, d, extremes.lambda_min, residual)
    return RegressionModel(alpha, basis_id, extremes.lambda_min, residual)


def fit_full(V, y, basis_id: str = "") -> RegressionModel:
    """Fits on every pool point with uniform weights 1/n and no ridge."""
    V = np.asarray(V, dtype=float)
    n = V.shape[0]
    if n < 1:
        raise ShapeError("Empty pool.")
    return fit_weighted(V, y, np.full(n, 1.0 / n), 0.0, basis_id)


def _check_basis(model: RegressionModel, basis: FeatureBasis) -> None:
    if basis.basis_id != model.basis_id:
        raise BasisMismatchError(
            f"Model was fitted in basis {model.basis_id!r} but basis {basis.basis_id!r} was supplied."
        )
    if basis.dim != model.dim:
        raise BasisMismatchError(f"Model has {model.dim} coefficients, basis has dimension {basis.dim}.")


def predict(model: RegressionModel, basis: FeatureBasis, x) -> float:
    _check_basis(model, basis)
    return float(model.alpha @ eval_basis(basis, x))


def predict_many(model: RegressionModel, basis: FeatureBasis, X) -> np.ndarray:
    _check_basis(model, basis)
    return eval_basis_matrix(basis, X) @ model.alpha


def raw_coefficients(model: RegressionModel, basis: FeatureBasis) -> np.ndarray:
    """
    Coefficients on the mapped features phi(x), before whitening.

    Since v(x) = L^{-1} P^T phi(x), the model equals (P L^{-T} alpha)^T phi(x).
    For the affine map the intercept is the last entry.
    """
    _check_basis(model, basis)
    coef = scipy.linalg.solve_triangular(basis.whitener, model.alpha, trans="T", lower=True)
    if basis.projection is not None:
        coef = basis.projection @ coef
    return coef


def sgd_sampling_probabilities(u) -> np.ndarray:
    """
    Probabilities u_i / sum(u) under which sampled SGD optimizes the weighted
    objective in expectation.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size == 0:
        raise ShapeError("Empty weight vector.")
    if np.any(u <= 0) or not np.all(np.isfinite(u)):
        raise DomainError("Weights must be positive and finite.")
    return u / np.sum(u)


def model_to_json(model: RegressionModel, meta: dict | None = None, basis: dict | None = None) -> dict:
    obj = {
        "basis_id": model.basis_id,
        "alpha": [float(a) for a in model.alpha],
        "gram_lambda_min": model.gram_lambda_min,
        "residual_norm": model.residual_norm,
    }
    if basis is not None:
        obj["basis"] = basis
    if meta is not None:
        obj["meta"] = meta
    return obj


def model_from_json(obj: dict) -> RegressionModel:
    alpha = np.array(obj["alpha"], dtype=float)
    if alpha.ndim != 1 or not np.all(np.isfinite(alpha)):
        raise ShapeError("Model coefficients must be a finite vector.")
    return RegressionModel(alpha, str(obj["basis_id"]), float(obj["gram_lambda_min"]), float(obj["residual_norm"]))
