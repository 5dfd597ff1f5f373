"""
basis.py

Builds the nearly orthonormal basis the sampler works in. Raw pool features are
lifted by a feature map (affine, or all monomials of degree <= 2 for the
quadratic-activation family) and whitened against the pool's empirical second
moment, so that under the pool-uniform distribution the basis functions have
unit norms and (numerically) zero pairwise inner products.

Also measures how orthonormal a basis is on a sample (rho), its alpha-condition
number, the norm window a rho-nearly orthonormal basis guarantees, and the
dimension bound for the Taylor basis of a general activation.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.preprocessing import PolynomialFeatures

from active_regression.config import FEATURE_MAPS, RANK_DROP_REL
from active_regression.errors import BoundOverflowError, DomainError, NumericalError, RankError, ShapeError
from active_regression.utilities import canonical_json, short_digest

logger = logging.getLogger(__name__)

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class FeatureMap:
    kind: str
    input_dim: int

    def __post_init__(self):
        if self.kind not in FEATURE_MAPS:
            raise DomainError(f"Unknown feature map {self.kind!r}; expected one of {FEATURE_MAPS}")
        if self.input_dim < 1:
            raise DomainError("input_dim must be positive.")

    @property
    def output_dim(self) -> int:
        p = self.input_dim
        if self.kind == "affine":
            return p + 1
        return 1 + p + p * (p + 1) // 2

    def transform(self, X) -> np.ndarray:
        """
        Applies the map to a matrix of raw features (one row per point).

        The affine map appends the intercept column last. The quadratic map
        returns monomials in graded order: 1, x_1..x_p, then x_i x_j for i <= j.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"Expected {self.input_dim} features, got {X.shape[1]}")
        if self.kind == "affine":
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return PolynomialFeatures(degree=2, include_bias=True).fit_transform(X)


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    """
    Whitened basis v(x) = L^{-1} P^T phi(x).

    `projection` (P) is None when no direction was dropped; otherwise its
    columns span the kept directions of the mapped second moment.
    """

    feature_map: FeatureMap
    whitener: np.ndarray
    ridge: float
    dropped_directions: int = 0
    projection: np.ndarray | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return self.whitener.shape[0]

    @property
    def basis_id(self) -> str:
        return short_digest(canonical_json(basis_to_json(self)))


@dataclass(frozen=True)
class RhoEstimate:
    max_diag_deviation: float
    max_offdiag: float
    sample_count: int

    @property
    def rho(self) -> float:
        return max(self.max_diag_deviation, self.max_offdiag)


def build_basis(pool_features, feature_map: FeatureMap, ridge: float = 0.0) -> FeatureBasis:
    """
    Whitens mapped pool features against their empirical second moment.

    Args:
        pool_features: n x p matrix of raw features of the unlabeled pool.
        feature_map: Map applied before whitening.
        ridge: Added to the second moment's diagonal (>= 0).

    Returns:
        A FeatureBasis whose Gram on the pool is the identity.
    """
    X = np.asarray(pool_features, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError(f"Expected a non-empty n x p matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericalError("Pool features contain non-finite entries.")
    if ridge < 0:
        raise DomainError("ridge must be >= 0.")
    n = X.shape[0]
    out_dim = feature_map.output_dim
    if ridge == 0 and n < out_dim:
        raise RankError(
            f"{n} pool points cannot span a {out_dim}-dimensional basis; set ridge > 0 to regularize."
        )

    phi = feature_map.transform(X)
    moment = phi.T @ phi / n + ridge * np.eye(out_dim)
    moment = 0.5 * (moment + moment.T)
    eigenvalues, vectors = scipy.linalg.eigh(moment)
    keep = eigenvalues >= RANK_DROP_REL * eigenvalues[-1]
    kept = int(np.count_nonzero(keep))
    dropped = out_dim - kept

    if dropped == 0:
        whitener = scipy.linalg.cholesky(moment, lower=True)
        return FeatureBasis(feature_map, whitener, float(ridge), 0, None)

    if ridge == 0 and kept <= 1 < out_dim:
        raise RankError(
            "Pool second moment has rank <= 1 (identical or collinear rows); set ridge > 0 to regularize."
        )
    logger.warning("Dropping %d rank-deficient direction(s) of %d", dropped, out_dim)
    projection = vectors[:, keep]
    whitener = np.diag(np.sqrt(eigenvalues[keep]))
    return FeatureBasis(feature_map, whitener, float(ridge), dropped, projection)


def eval_basis_matrix(basis: FeatureBasis, X) -> np.ndarray:
    """
    Evaluates the basis on every row of X.

    Args:
        basis: The basis.
        X: m x p raw features.

    Returns:
        m x d matrix of basis evaluations.
    """
    phi = basis.feature_map.transform(X)
    if basis.projection is not None:
        phi = phi @ basis.projection
    return scipy.linalg.solve_triangular(basis.whitener, phi.T, lower=True).T


def eval_basis(basis: FeatureBasis, x) -> np.ndarray:
    """Evaluates the basis at a single raw feature vector."""
    vec = np.asarray(x, dtype=float).reshape(-1)
    if vec.shape[0] != basis.feature_map.input_dim:
        raise ShapeError(f"Expected {basis.feature_map.input_dim} features, got {vec.shape[0]}")
    return eval_basis_matrix(basis, vec.reshape(1, -1))[0]


def gram_deviation(V) -> RhoEstimate:
    """
    Measures how far the empirical Gram of basis evaluations is from identity.

    Args:
        V: m x d matrix of basis evaluations.

    Returns:
        RhoEstimate with max |G_ii - 1| and max_{i != j} |G_ij|.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise ShapeError("Expected a matrix of basis evaluations.")
    m, d = V.shape
    if m < 2:
        raise DomainError("At least 2 samples are needed to estimate rho.")
    gram = V.T @ V / m
    diag_dev = float(np.max(np.abs(np.diag(gram) - 1.0)))
    off = gram - np.diag(np.diag(gram))
    max_off = float(np.max(np.abs(off))) if d > 1 else 0.0
    return RhoEstimate(diag_dev, max_off, m)


def estimate_rho(basis: FeatureBasis, samples) -> RhoEstimate:
    return gram_deviation(eval_basis_matrix(basis, samples))


def alpha_condition_number_from_evaluations(V) -> float:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] < 1:
        raise ShapeError("Expected a non-empty matrix of basis evaluations.")
    return float(np.max(np.einsum("ij,ij->i", V, V)))


def alpha_condition_number(basis: FeatureBasis, pool_features) -> float:
    """
    K_alpha for the pool-uniform distribution: the largest squared basis norm
    over the pool, which is the tight value of sup_h |h(x)|^2 / ||alpha(h)||^2.
    """
    return alpha_condition_number_from_evaluations(eval_basis_matrix(basis, pool_features))


def condition_number_K(V) -> float:
    """
    Condition number K = sup_x sup_h |h(x)|^2 / ||h||_D^2 with D uniform over the
    rows of V, computed as max_x v(x)^T G^{-1} v(x).
    """
    V = np.asarray(V, dtype=float)
    gram = V.T @ V / V.shape[0]
    solved = scipy.linalg.solve(gram, V.T, assume_a="pos")
    return float(np.max(np.einsum("ij,ji->i", V, solved)))


def required_pool_size(K: float, d: int, epsilon: float, const: float = 1.0) -> int:
    """
    Unlabeled pool size ceil(const * (K ln d + K / epsilon)) the recovery
    guarantee asks for.
    """
    if K < 1 or d < 1 or not 0 < epsilon <= 1 or const <= 0:
        raise DomainError("Need K >= 1, d >= 1, 0 < epsilon <= 1 and const > 0.")
    return int(math.ceil(const * (K * math.log(d) + K / epsilon)))


def norm_bounds(alpha, rho: float, d: int) -> tuple[float, float]:
    """
    Window for ||h||_D^2 guaranteed by a rho-nearly orthonormal basis.

    Args:
        alpha: Coefficient vector of h.
        rho: Off-diagonal bound, 0 <= rho < 1.
        d: Basis dimension.

    Returns:
        ((1 - rho) ||alpha||^2, (1 + rho (d - 1)) ||alpha||^2)
    """
    if not 0 <= rho < 1:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    sq = float(np.sum(np.asarray(alpha, dtype=float) ** 2))
    return (1.0 - rho) * sq, (1.0 + rho * (d - 1)) * sq


def taylor_basis_dim_bound(d: int, eps0: float) -> int:
    """
    Exact value of binom(ceil(10 d + ln(1/eps0) / ln d), d), the size of the
    polynomial basis that approximates a smooth activation to accuracy eps0.

    Args:
        d: Input dimension, d >= 3.
        eps0: Additive accuracy, 0 < eps0 <= 1/10.

    Returns:
        The bound as a Python int.
    """
    if d < 3:
        raise DomainError("The dimension bound needs d >= 3.")
    if not 0 < eps0 <= 0.1:
        raise DomainError("eps0 must lie in (0, 1/10].")
    degree = math.ceil(10 * d + math.log(1.0 / eps0) / math.log(d))
    value = math.comb(degree, d)
    if value > INT64_MAX:
        log_bound = math.lgamma(degree + 1) - math.lgamma(d + 1) - math.lgamma(degree - d + 1)
        raise BoundOverflowError(
            f"binom({degree}, {d}) exceeds the 64-bit range (ln = {log_bound:.3f})", log_bound
        )
    return value


def basis_to_json(basis: FeatureBasis) -> dict:
    obj = {
        "kind": basis.feature_map.kind,
        "input_dim": basis.feature_map.input_dim,
        "ridge": basis.ridge,
        "dropped_directions": basis.dropped_directions,
        "whitener": [[float(x) for x in row] for row in basis.whitener],
    }
    if basis.projection is not None:
        obj["projection"] = [[float(x) for x in row] for row in basis.projection]
    return obj


def basis_from_json(obj: dict) -> FeatureBasis:
    projection = obj.get("projection")
    return FeatureBasis(
        feature_map=FeatureMap(obj["kind"], int(obj["input_dim"])),
        whitener=np.array(obj["whitener"], dtype=float),
        ridge=float(obj["ridge"]),
        dropped_directions=int(obj["dropped_directions"]),
        projection=None if projection is None else np.array(projection, dtype=float),
    )
