"""
sampler.py

Randomized BSS iterative importance sampling over a finite pool, the i.i.d.
uniform baseline, sample-size calculators and the checks of the
norm-preserving and noise-controlling conditions.

The pool distribution D is uniform over the rows of V. In round j the sampler
draws a row with probability proportional to its barrier score

    sigma_i = v_i^T (r_j I - B_j)^{-1} v_i + v_i^T (B_j - l_j I)^{-1} v_i,

adds s_j v v^T to B_j with s_j = gamma * (D(x) / D_j(x)) / Phi_j, and moves both
barriers to the right until their gap reaches 8 d / gamma.
"""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from active_regression.config import (
    DEFAULT_C0,
    FRESH_INVERSE_MAX_DIM,
    MAX_ITERS_FACTOR,
    NOISE_BUDGET,
    TERMINATION_CONSTANT,
)
from active_regression.core_linalg import (
    EigenExtremes,
    eig_extremes,
    inverse_psd,
    sherman_morrison_update,
    shift_inverse,
)
from active_regression.errors import (
    BarrierViolationError,
    DomainError,
    IterationCapError,
    NumericalError,
    ShapeError,
    SingularMatrixError,
)
from active_regression.utilities import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Draw:
    index: int
    s: float
    beta: float


@dataclass
class BarrierState:
    """Running state of one sampler run."""

    B: np.ndarray
    lower: float
    upper: float
    inv_upper: np.ndarray
    inv_lower: np.ndarray
    j: int
    gamma: float
    phi: float = float("nan")

    @classmethod
    def initial(cls, d: int, gamma: float) -> "BarrierState":
        upper = 2.0 * d / gamma
        lower = -upper
        return cls(
            B=np.zeros((d, d)),
            lower=lower,
            upper=upper,
            inv_upper=np.eye(d) / upper,
            inv_lower=np.eye(d) / (-lower),
            j=0,
            gamma=gamma,
        )

    def refresh(self) -> None:
        """Recomputes both inverses from B after checking barrier containment."""
        d = self.B.shape[0]
        extremes = eig_extremes(self.B)
        if not (self.lower < extremes.lambda_min and extremes.lambda_max < self.upper):
            raise BarrierViolationError(
                f"Round {self.j}: spectrum [{extremes.lambda_min:.6g}, {extremes.lambda_max:.6g}] "
                f"left the barrier window ({self.lower:.6g}, {self.upper:.6g})"
            )
        try:
            self.inv_upper = inverse_psd(self.upper * np.eye(d) - self.B).entries
            self.inv_lower = inverse_psd(self.B - self.lower * np.eye(d)).entries
        except SingularMatrixError as e:
            raise BarrierViolationError(f"Round {self.j}: barrier matrix is singular ({e})") from e

    def potential(self) -> float:
        return float(np.trace(self.inv_upper) + np.trace(self.inv_lower))


@dataclass(frozen=True)
class BssDiagnostics:
    dim: int
    potentials: tuple[float, ...]
    lower_history: tuple[float, ...]
    upper_history: tuple[float, ...]
    round_k_alpha: tuple[float, ...]
    sum_gamma_over_phi: float
    max_step_ratio: float
    refreshes: int

    @property
    def final_lower(self) -> float:
        return self.lower_history[-1]

    @property
    def final_upper(self) -> float:
        return self.upper_history[-1]


@dataclass(frozen=True)
class SelectionResult:
    draws: tuple[Draw, ...]
    weights: dict[int, float]
    iterations: int
    gamma: float
    mid: float
    epsilon: float
    seed: int
    c0: float
    distinct_count: int
    gram_extremes: EigenExtremes | None
    strategy: str = "bss"
    diagnostics: BssDiagnostics | None = field(default=None, compare=False)

    @property
    def indices(self) -> np.ndarray:
        return np.array(list(self.weights.keys()), dtype=int)

    @property
    def weight_vector(self) -> np.ndarray:
        return np.array(list(self.weights.values()), dtype=float)

    @property
    def betas(self) -> np.ndarray:
        return np.array([draw.beta for draw in self.draws], dtype=float)


def bss_constants(d: int, epsilon: float, c0: float = DEFAULT_C0) -> tuple[float, float]:
    """
    Returns (gamma, mid) for a run on a d-dimensional basis.

    gamma = sqrt(epsilon) / c0 and mid = (4 d / gamma) / (1 / (1 - gamma) - 1 / (1 + gamma)).
    """
    if not 0 < epsilon <= 1:
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon}")
    if c0 < 1:
        raise DomainError(f"c0 must be >= 1, got {c0}")
    if d < 1:
        raise DomainError("d must be positive.")
    gamma = math.sqrt(epsilon) / c0
    if gamma >= 1:
        raise DomainError("gamma = sqrt(epsilon) / c0 must stay below 1; raise c0.")
    mid = (4.0 * d / gamma) / (1.0 / (1.0 - gamma) - 1.0 / (1.0 + gamma))
    return gamma, mid


def default_max_iters(d: int, gamma: float) -> int:
    return int(math.ceil(MAX_ITERS_FACTOR * d / gamma**2))


def _aggregate(draws: list[Draw], mid: float) -> "OrderedDict[int, float]":
    weights: dict[int, float] = {}
    for draw in draws:
        weights[draw.index] = weights.get(draw.index, 0.0) + draw.s / mid
    return OrderedDict(sorted(weights.items()))


def _check_pool(V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] < 1 or V.shape[1] < 1:
        raise ShapeError(f"Expected a non-empty n x d matrix of basis evaluations, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise NumericalError("Basis evaluations contain non-finite entries.")
    return V


def select_bss(
    V,
    epsilon: float,
    seed: int,
    c0: float = DEFAULT_C0,
    max_iters: int | None = None,
) -> SelectionResult:
    """
    Runs the randomized BSS importance-sampling procedure on a pool.

    Args:
        V: n x d matrix of basis evaluations (one row per pool point).
        epsilon: Accuracy parameter in (0, 1].
        seed: 64-bit seed; the result is a deterministic function of (V, epsilon, seed, c0).
        c0: Constant in gamma = sqrt(epsilon) / c0, >= 1.
        max_iters: Hard cap on rounds; defaults to MAX_ITERS_FACTOR * d / gamma^2.

    Returns:
        SelectionResult with per-round draws, aggregated weights and diagnostics.
    """
    V = _check_pool(V)
    n, d = V.shape
    gamma, mid = bss_constants(d, epsilon, c0)
    if max_iters is None:
        max_iters = default_max_iters(d, gamma)
    if max_iters < 1:
        raise DomainError("max_iters must be positive.")

    rng = make_rng(seed)
    row_norms = np.einsum("ij,ij->i", V, V)
    target_gap = 8.0 * d / gamma
    fresh = d <= FRESH_INVERSE_MAX_DIM

    state = BarrierState.initial(d, gamma)
    draws_raw: list[tuple[int, float, float]] = []
    potentials: list[float] = []
    lower_history = [state.lower]
    upper_history = [state.upper]
    round_k_alpha: list[float] = []
    max_step_ratio = 0.0
    refreshes = 0

    def partial() -> dict:
        return {
            "iterations": state.j,
            "lower": state.lower,
            "upper": state.upper,
            "potentials": list(potentials),
            "gamma": gamma,
            "mid": mid,
        }

    while True:
        if state.j >= max_iters:
            raise IterationCapError(
                f"Sampler did not terminate within {max_iters} rounds (gap {state.upper - state.lower:.6g} "
                f"of {target_gap:.6g})",
                partial=partial(),
            )
        if fresh or state.j % d == 0:
            state.refresh()
            refreshes += 1
        phi = state.potential()
        state.phi = phi
        if not np.isfinite(phi) or phi <= 0:
            raise NumericalError(f"Round {state.j}: potential is {phi}")

        scores = np.einsum("ij,ij->i", V @ (state.inv_upper + state.inv_lower), V)
        total = float(np.sum(scores))
        if not np.isfinite(total) or total <= np.finfo(float).tiny:
            raise NumericalError(f"Round {state.j}: sampling scores sum to {total}; every pool row is degenerate.")

        # inverse-CDF over the stable row order
        cdf = np.cumsum(scores)
        index = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        index = min(index, n - 1)
        score = float(scores[index])

        importance = total / (n * score)  # D(x) / D_j(x)
        s = gamma * importance / phi
        v = V[index]
        max_step_ratio = max(max_step_ratio, s * float(v @ state.inv_upper @ v))
        positive = scores > 0
        round_k_alpha.append(float(np.max(total / (n * scores[positive]) * row_norms[positive])))

        state.B = state.B + s * np.outer(v, v)
        step_upper = gamma / (phi * (1.0 - gamma))
        step_lower = gamma / (phi * (1.0 + gamma))
        if not fresh:
            state.inv_upper = shift_inverse(sherman_morrison_update(state.inv_upper, v, -s), step_upper).entries
            state.inv_lower = shift_inverse(sherman_morrison_update(state.inv_lower, v, s), -step_lower).entries
        state.upper += step_upper
        state.lower += step_lower

        draws_raw.append((index, s, phi))
        potentials.append(phi)
        lower_history.append(state.lower)
        upper_history.append(state.upper)
        state.j += 1

        if state.j % max(d, 1) == 0:
            logger.debug(
                "round %d: phi=%.6g l=%.6g r=%.6g gap=%.6g", state.j, phi, state.lower, state.upper,
                state.upper - state.lower,
            )
        if state.upper - state.lower >= target_gap:
            break

    k = state.j
    draws = [Draw(index, s, gamma / (phi * mid)) for index, s, phi in draws_raw]
    weights = _aggregate(draws, mid)
    gram = state.B / mid
    extremes = eig_extremes(0.5 * (gram + gram.T))
    diagnostics = BssDiagnostics(
        dim=d,
        potentials=tuple(potentials),
        lower_history=tuple(lower_history),
        upper_history=tuple(upper_history),
        round_k_alpha=tuple(round_k_alpha),
        sum_gamma_over_phi=float(sum(gamma / phi for phi in potentials)),
        max_step_ratio=max_step_ratio,
        refreshes=refreshes,
    )
    logger.info(
        "BSS selection: eps=%g gamma=%.4g mid=%.6g rounds=%d distinct=%d gram=[%.4f, %.4f]",
        epsilon, gamma, mid, k, len(weights), extremes.lambda_min, extremes.lambda_max,
    )
    return SelectionResult(
        draws=tuple(draws),
        weights=weights,
        iterations=k,
        gamma=gamma,
        mid=mid,
        epsilon=float(epsilon),
        seed=int(seed),
        c0=float(c0),
        distinct_count=len(weights),
        gram_extremes=extremes,
        strategy="bss",
        diagnostics=diagnostics,
    )


def select_uniform(n: int, k: int, seed: int) -> SelectionResult:
    """
    Draws k pool indices i.i.d. uniformly with replacement, each with weight 1/k.

    A uniform selection uses gamma = 0 and mid = 1 as markers, so that u = s / mid
    holds for it as for a BSS selection.

    Args:
        n: Pool size.
        k: Number of draws.
        seed: 64-bit seed.

    Returns:
        SelectionResult without BSS diagnostics.
    """
    if n < 1 or k < 1:
        raise DomainError("Pool size and k must be positive.")
    rng = make_rng(seed)
    indices = rng.integers(0, n, size=k)
    share = 1.0 / k
    draws = [Draw(int(i), share, share) for i in indices]
    weights = _aggregate(draws, 1.0)
    return SelectionResult(
        draws=tuple(draws),
        weights=weights,
        iterations=k,
        gamma=0.0,
        mid=1.0,
        epsilon=0.0,
        seed=int(seed),
        c0=0.0,
        distinct_count=len(weights),
        gram_extremes=None,
        strategy="uniform",
    )


def iid_sample_bound(K_alpha: float, d: int, epsilon: float, delta: float, rho: float) -> float:
    """6 K ln(d / delta) / (epsilon^2 (1 - rho d)), before rounding up."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1).")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1).")
    if rho < 0 or rho * d >= 1:
        raise DomainError(f"Need 0 <= rho * d < 1, got rho * d = {rho * d}")
    if K_alpha < 1 or d < 1:
        raise DomainError("Need K_alpha >= 1 and d >= 1.")
    return 6.0 * K_alpha * math.log(d / delta) / (epsilon**2 * (1.0 - rho * d))


def required_iid_size(K_alpha: float, d: int, epsilon: float, delta: float, rho: float) -> int:
    """
    Number of i.i.d. draws after which ||A^T A - I|| <= epsilon holds with
    probability 1 - delta (matrix Chernoff).
    """
    return int(math.ceil(iid_sample_bound(K_alpha, d, epsilon, delta, rho)))


def weighted_gram(V, selection: SelectionResult) -> np.ndarray:
    """A^T A for A with rows sqrt(u_i) v(x_i), one per distinct selected index."""
    V = _check_pool(V)
    indices = selection.indices
    if indices.size == 0 or indices.min() < 0 or indices.max() >= V.shape[0]:
        raise ShapeError("Selection indices do not fit the pool.")
    rows = V[indices]
    return (rows * selection.weight_vector[:, None]).T @ rows


def verify_norm_preserving(V, selection: SelectionResult) -> EigenExtremes:
    gram = weighted_gram(V, selection)
    return eig_extremes(0.5 * (gram + gram.T))


def round_alpha_condition_numbers(selection: SelectionResult, V=None) -> list[float]:
    """
    K_{alpha, D_j} for every round: stored by the BSS sampler, and max ||v||^2
    (the pool-uniform value) for a uniform selection, which needs V.
    """
    if selection.diagnostics is not None:
        return list(selection.diagnostics.round_k_alpha)
    if V is None:
        raise ShapeError("A uniform selection needs the pool evaluations to compute K_alpha.")
    V = _check_pool(V)
    k_alpha = float(np.max(np.einsum("ij,ij->i", V, V)))
    return [k_alpha] * len(selection.draws)


def verify_noise_controlling(selection: SelectionResult, K_alpha_per_round, epsilon: float) -> tuple[bool, bool]:
    """
    Checks sum beta <= 3/2 and beta_j * K_{alpha, D_j} <= epsilon / 2.

    Returns:
        (budget_ok, per_round_ok)
    """
    k_alpha = np.asarray(K_alpha_per_round, dtype=float)
    betas = selection.betas
    if k_alpha.shape != betas.shape:
        raise ShapeError(f"{k_alpha.shape[0]} K_alpha values for {betas.shape[0]} rounds")
    budget_ok = bool(np.sum(betas) <= NOISE_BUDGET)
    per_round_ok = bool(np.max(betas * k_alpha) <= epsilon / 2.0)
    return budget_ok, per_round_ok


def termination_report(selection: SelectionResult) -> dict:
    """
    Evaluates the termination contracts of a completed BSS run: final gap,
    mid against sum gamma / Phi_j, iteration count against C d / gamma^2 and the
    conditional eigenvalue window. The largest s v^T (uI - B)^{-1} v seen must stay
    below 1 so every rank-one step lands strictly under the upper barrier; on a
    whitened pool it is at most gamma.
    """
    diag = selection.diagnostics
    if diag is None:
        raise DomainError("Termination diagnostics exist only for BSS selections.")
    gamma, mid, d = selection.gamma, selection.mid, diag.dim
    total = diag.sum_gamma_over_phi
    ratio_condition = diag.final_lower > 0 and diag.final_upper / diag.final_lower <= 1.0 + 8.0 * gamma
    window_ok = True
    if ratio_condition:
        ext = selection.gram_extremes
        window_ok = 1.0 - 5.0 * gamma < ext.lambda_min and ext.lambda_max < 1.0 + 5.0 * gamma
    return {
        "gap": diag.final_upper - diag.final_lower,
        "gap_ok": diag.final_upper - diag.final_lower <= 9.0 * d / gamma,
        "mid_upper_ok": mid <= total * (1.0 + 1e-12),
        "mid_lower_ok": (1.0 - 0.5 * gamma**2 / d) * total <= mid,
        "overshoot": total - mid,
        "last_increment": gamma / diag.potentials[-1],
        "iterations_ok": selection.iterations <= math.ceil(TERMINATION_CONSTANT * d / gamma**2),
        "max_step_ratio": diag.max_step_ratio,
        "step_ratio_ok": diag.max_step_ratio < 1.0,
        "ratio_condition": bool(ratio_condition),
        "window_ok": bool(window_ok),
    }


def chernoff_trial(V, k: int, seed: int) -> float:
    """||A^T A - I||_2 for k uniform i.i.d. draws weighted 1/k."""
    V = _check_pool(V)
    extremes = verify_norm_preserving(V, select_uniform(V.shape[0], k, seed))
    return max(abs(extremes.lambda_min - 1.0), abs(extremes.lambda_max - 1.0))


def selection_to_json(selection: SelectionResult, meta: dict | None = None, basis: dict | None = None) -> dict:
    ext = selection.gram_extremes
    obj = {
        "strategy": selection.strategy,
        "epsilon": selection.epsilon,
        "seed": selection.seed,
        "c0": selection.c0,
        "gamma": selection.gamma,
        "mid": selection.mid,
        "iterations": selection.iterations,
        "distinct_count": selection.distinct_count,
        "gram_lambda_min": None if ext is None else ext.lambda_min,
        "gram_lambda_max": None if ext is None else ext.lambda_max,
        "draws": [{"index": d.index, "s": d.s, "beta": d.beta} for d in selection.draws],
        "weights": [{"index": int(i), "u": float(u)} for i, u in selection.weights.items()],
    }
    if basis is not None:
        obj["basis"] = basis
    if meta is not None:
        obj["meta"] = meta
    return obj


def selection_from_json(obj: dict) -> SelectionResult:
    lam_min, lam_max = obj.get("gram_lambda_min"), obj.get("gram_lambda_max")
    weights = OrderedDict((int(w["index"]), float(w["u"])) for w in obj["weights"])
    return SelectionResult(
        draws=tuple(Draw(int(d["index"]), float(d["s"]), float(d["beta"])) for d in obj["draws"]),
        weights=weights,
        iterations=int(obj["iterations"]),
        gamma=float(obj["gamma"]),
        mid=float(obj["mid"]),
        epsilon=float(obj["epsilon"]),
        seed=int(obj["seed"]),
        c0=float(obj["c0"]),
        distinct_count=int(obj["distinct_count"]),
        gram_extremes=None if lam_min is None else EigenExtremes(float(lam_min), float(lam_max)),
        strategy=obj.get("strategy", "bss"),
    )
