"""
core_linalg.py

Dense symmetric linear-algebra kernel: extreme eigenvalues, inverses with a
numerical floor, Sherman-Morrison rank-one updates, traces of inverses,
quadratic forms and positive-definite solves.

All functions are pure: inputs are never modified and every returned matrix is
a fresh read-only SymMatrix.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from active_regression.config import EIG_FLOOR_REL, SM_DENOM_TOL, SYMMETRY_RTOL
from active_regression.errors import (
    ConvergenceError,
    DegenerateUpdateError,
    NumericalError,
    ShapeError,
    SingularMatrixError,
)


@dataclass(frozen=True)
class SymMatrix:
    """
    Dense symmetric matrix. Storage is exactly symmetric and read-only.

    Build instances with `as_sym`, which validates and symmetrizes the input.
    """

    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class EigenExtremes:
    lambda_min: float
    lambda_max: float

    def contained_in(self, low: float, high: float) -> bool:
        return low <= self.lambda_min and self.lambda_max <= high


def as_sym(a, atol: float | None = None) -> SymMatrix:
    """
    Validates a square matrix and returns it as an exactly symmetric SymMatrix.

    Args:
        a: Square array-like or an existing SymMatrix.
        atol: Allowed asymmetry |a_ij - a_ji|; defaults to a small multiple of max|a|.

    Returns:
        SymMatrix holding (a + a^T) / 2.
    """
    if isinstance(a, SymMatrix):
        return a
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ShapeError(f"Expected a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError("Matrix has non-finite entries.")
    if atol is None:
        atol = SYMMETRY_RTOL * (1.0 + np.max(np.abs(arr)))
    if np.max(np.abs(arr - arr.T)) > atol:
        raise ShapeError("Matrix is not symmetric.")
    sym = 0.5 * (arr + arr.T)
    sym.setflags(write=False)
    return SymMatrix(sym)


def _vector(v, dim: int) -> np.ndarray:
    vec = np.asarray(v, dtype=float).reshape(-1)
    if vec.shape[0] != dim:
        raise ShapeError(f"Vector of length {vec.shape[0]} does not match dimension {dim}")
    return vec


def _eigh(m: SymMatrix, eigvals_only: bool = False):
    try:
        return scipy.linalg.eigh(m.entries, eigvals_only=eigvals_only, check_finite=True)
    except ValueError as e:
        raise NumericalError(f"Eigen-solver rejected input: {e}") from e
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"Symmetric eigen-solver did not converge: {e}") from e


def _floor(eigenvalues: np.ndarray, min_eig_floor: float | None) -> float:
    if min_eig_floor is not None:
        return min_eig_floor
    return EIG_FLOOR_REL * max(float(np.max(np.abs(eigenvalues))), np.finfo(float).tiny)


def eig_extremes(m, tol: float = 1e-12) -> EigenExtremes:
    """
    Smallest and largest eigenvalue of a symmetric matrix.

    Args:
        m: Symmetric matrix.
        tol: Requested accuracy, relative to 1 + |lambda|. LAPACK's symmetric
            solver is accurate to machine precision, so any tol > 0 is met.

    Returns:
        EigenExtremes(lambda_min, lambda_max).
    """
    if tol <= 0:
        raise NumericalError("tol must be positive.")
    eigenvalues = _eigh(as_sym(m), eigvals_only=True)
    return EigenExtremes(float(eigenvalues[0]), float(eigenvalues[-1]))


def spectral_deviation(m) -> float:
    """Returns ||m - I||_2 for symmetric m."""
    extremes = eig_extremes(m)
    return max(abs(extremes.lambda_min - 1.0), abs(extremes.lambda_max - 1.0))


def inverse_psd(m, min_eig_floor: float | None = None) -> SymMatrix:
    """
    Inverse of a positive-definite matrix whose spectrum stays above a floor.

    Args:
        m: Symmetric matrix.
        min_eig_floor: Smallest acceptable eigenvalue; defaults to
            EIG_FLOOR_REL * lambda_max.

    Returns:
        The symmetric inverse.
    """
    sym = as_sym(m)
    eigenvalues, vectors = _eigh(sym)
    floor = _floor(eigenvalues, min_eig_floor)
    if eigenvalues[0] < floor:
        raise SingularMatrixError(
            f"lambda_min = {eigenvalues[0]:.3e} is below the floor {floor:.3e}"
        )
    inverse = (vectors / eigenvalues) @ vectors.T
    return as_sym(0.5 * (inverse + inverse.T))


def sherman_morrison_update(m_inv, u, scale: float) -> SymMatrix:
    """
    Returns (M + scale * u u^T)^{-1} given M^{-1}.

    Args:
        m_inv: Inverse of a positive-definite matrix M.
        u: Update direction.
        scale: Multiplier of the rank-one term.

    Returns:
        The updated symmetric inverse.
    """
    inv = as_sym(m_inv)
    vec = _vector(u, inv.dim)
    w = inv.entries @ vec
    denom = 1.0 + scale * float(vec @ w)
    if abs(denom) < SM_DENOM_TOL:
        raise DegenerateUpdateError(f"Sherman-Morrison denominator {denom:.3e} is numerically zero.")
    updated = inv.entries - (scale / denom) * np.outer(w, w)
    return as_sym(0.5 * (updated + updated.T))


def shift_inverse(m_inv, delta: float) -> SymMatrix:
    """
    Approximates (M + delta * I)^{-1} from M^{-1} with a second-order Neumann
    series. Accurate when |delta| * ||M^{-1}|| is small.
    """
    inv = as_sym(m_inv).entries
    inv2 = inv @ inv
    shifted = inv - delta * inv2 + (delta * delta) * (inv2 @ inv)
    return as_sym(0.5 * (shifted + shifted.T))


def trace_of_inverse(m, min_eig_floor: float | None = None) -> float:
    """
    tr(m^{-1}) computed as the sum of reciprocal eigenvalues.

    Args:
        m: Symmetric positive-definite matrix.
        min_eig_floor: As for inverse_psd.

    Returns:
        The trace of the inverse.
    """
    eigenvalues = _eigh(as_sym(m), eigvals_only=True)
    floor = _floor(eigenvalues, min_eig_floor)
    if eigenvalues[0] < floor:
        raise SingularMatrixError(
            f"lambda_min = {eigenvalues[0]:.3e} is below the floor {floor:.3e}"
        )
    return float(np.sum(1.0 / eigenvalues))


def quad_form(m_inv, v) -> float:
    """Returns v^T m_inv v."""
    mat = as_sym(m_inv)
    vec = _vector(v, mat.dim)
    return float(vec @ mat.entries @ vec)


def solve_psd(m, b, min_eig_floor: float | None = None) -> np.ndarray:
    """
    Solves m x = b for positive-definite m via a Cholesky factorization.

    Args:
        m: Symmetric positive-definite matrix.
        b: Right-hand side.
        min_eig_floor: As for inverse_psd.

    Returns:
        The solution vector.
    """
    sym = as_sym(m)
    rhs = _vector(b, sym.dim)
    eigenvalues = _eigh(sym, eigvals_only=True)
    floor = _floor(eigenvalues, min_eig_floor)
    if eigenvalues[0] < floor:
        raise SingularMatrixError(
            f"lambda_min = {eigenvalues[0]:.3e} is below the floor {floor:.3e}"
        )
    try:
        factor = scipy.linalg.cho_factor(sym.entries, lower=True)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"Cholesky factorization failed: {e}") from e
    return scipy.linalg.cho_solve(factor, rhs)
