"""
verification.py

Property suites behind the `verify` subcommand. Each suite runs seeded
randomized trials of one layer (kernel, basis, sampler, matrix Chernoff,
recovery) and reports one CheckResult per property with the measured
statistic next to the threshold it is held to.
"""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg
from tqdm import tqdm

from active_regression.basis import (
    FeatureMap,
    alpha_condition_number_from_evaluations,
    build_basis,
    eval_basis_matrix,
    gram_deviation,
)
from active_regression.config import NORM_PRESERVING_WINDOW
from active_regression.core_linalg import eig_extremes, sherman_morrison_update, trace_of_inverse
from active_regression.data import synth_regression
from active_regression.erm import fit_weighted, raw_coefficients
from active_regression.errors import DomainError
from active_regression.sampler import (
    chernoff_trial,
    required_iid_size,
    round_alpha_condition_numbers,
    select_bss,
    termination_report,
    verify_noise_controlling,
    verify_norm_preserving,
)
from active_regression.utilities import derive_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    trials: int
    seed: int
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_json(self) -> dict:
        return {
            "suite": self.suite,
            "trials": self.trials,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [asdict(check) for check in self.checks],
        }


def _at_most(name: str, statistic: float, threshold: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(statistic <= threshold), float(statistic), float(threshold), detail)


def _at_least(name: str, statistic: float, threshold: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(statistic >= threshold), float(statistic), float(threshold), detail)


def random_pd(rng: np.random.Generator, d: int) -> np.ndarray:
    G = rng.standard_normal((d, d))
    return G @ G.T + d * np.eye(d)


def whitened_normal_pool(n: int, d: int, seed: int) -> np.ndarray:
    """Basis evaluations of a standard-normal pool under the whitened affine map (dimension d)."""
    X = make_rng(seed).standard_normal((n, d - 1))
    basis = build_basis(X, FeatureMap("affine", d - 1))
    return eval_basis_matrix(basis, X)


def nearly_orthonormal_gram(rng: np.random.Generator, d: int, rho: float, atoms: int = 4) -> np.ndarray:
    """
    Unit-diagonal Gram with off-diagonal entries bounded by rho and a positive
    semidefinite off-diagonal part: (1 - rho) I + rho * sum_k w_k c_k c_k^T with
    sign vectors c_k and convex weights w_k.
    """
    signs = rng.choice([-1.0, 1.0], size=(atoms, d))
    weights = rng.dirichlet(np.ones(atoms))
    return (1.0 - rho) * np.eye(d) + rho * (signs.T * weights) @ signs


def linalg_suite(trials: int, seed: int, progress: bool = False) -> list[CheckResult]:
    rng = make_rng(seed)
    sm_error = 0.0
    trace_error = 0.0
    for _ in tqdm(range(trials), desc="linalg", disable=not progress):
        d = int(rng.integers(1, 21))
        M = random_pd(rng, d)
        u = rng.standard_normal(d)
        scale = float(rng.uniform(0.1, 2.0))
        updated = sherman_morrison_update(scipy.linalg.inv(M), u, scale).entries
        direct = scipy.linalg.inv(M + scale * np.outer(u, u))
        sm_error = max(sm_error, float(np.max(np.abs(updated - direct)) / np.max(np.abs(direct))))
        oracle = float(np.sum(1.0 / np.linalg.eigvalsh(M)))
        trace_error = max(trace_error, abs(trace_of_inverse(M) - oracle) / oracle)
    return [
        _at_most("sherman_morrison_vs_direct_inverse", sm_error, 1e-8, "max relative entry error"),
        _at_most("trace_of_inverse_vs_eigenvalue_sum", trace_error, 1e-8, "max relative error"),
    ]


def basis_suite(trials: int, seed: int, progress: bool = False) -> list[CheckResult]:
    rng = make_rng(seed)
    window_excess = -math.inf
    sandwich_excess = -math.inf
    for _ in tqdm(range(trials), desc="basis", disable=not progress):
        d = int(rng.integers(2, 31))
        rho = float(rng.choice([0.001, 0.01, 0.1 / d]))
        off = rng.uniform(-rho, rho, size=(d, d))
        G = np.triu(off, 1)
        G = G + G.T + np.eye(d)
        ext = eig_extremes(G)
        window_excess = max(window_excess, (1.0 - d * rho) - ext.lambda_min, ext.lambda_max - (1.0 + d * rho))

        G = nearly_orthonormal_gram(rng, d, rho)
        alpha = rng.standard_normal(d)
        value = float(alpha @ G @ alpha)
        sq = float(alpha @ alpha)
        low, high = (1.0 - rho) * sq, (1.0 + rho * (d - 1)) * sq
        sandwich_excess = max(sandwich_excess, (low - value) / sq, (value - high) / sq)

    X = rng.standard_normal((5000, 6))
    basis = build_basis(X, FeatureMap("affine", 6))
    whitened = gram_deviation(eval_basis_matrix(basis, X)).rho
    return [
        _at_most("gram_eigenvalue_window", window_excess, 1e-12, "max excursion beyond [1 - d rho, 1 + d rho]"),
        _at_most("norm_sandwich", sandwich_excess, 1e-12, "max relative excursion beyond the sandwich"),
        _at_most("whitened_pool_rho", whitened, 1e-6, "rho of the construction pool after whitening"),
    ]


def sampler_suite(trials: int, seed: int, progress: bool = False, n: int = 2000, d: int = 10,
                  epsilon: float = 0.25) -> list[CheckResult]:
    V = whitened_normal_pool(n, d, seed)
    low, high = NORM_PRESERVING_WINDOW
    in_window = 0
    in_iterations = 0
    gap_fail = mid_fail = window_fail = noise_fail = 0
    overshoot_excess = -math.inf
    step_ratio_excess = -math.inf
    for trial in tqdm(range(trials), desc="sampler", disable=not progress):
        selection = select_bss(V, epsilon, derive_seed(seed, trial))
        ext = verify_norm_preserving(V, selection)
        in_window += int(ext.contained_in(low, high))
        report = termination_report(selection)
        in_iterations += int(report["iterations_ok"])
        gap_fail += int(not report["gap_ok"])
        mid_fail += int(not report["mid_upper_ok"])
        window_fail += int(report["ratio_condition"] and not report["window_ok"])
        overshoot_excess = max(overshoot_excess, report["overshoot"] - report["last_increment"])
        step_ratio_excess = max(step_ratio_excess, report["max_step_ratio"] / selection.gamma - 1.0)
        budget_ok, per_round_ok = verify_noise_controlling(
            selection, round_alpha_condition_numbers(selection), epsilon
        )
        noise_fail += int(not (budget_ok and per_round_ok))
    return [
        _at_least("norm_preserving_frequency", in_window / trials, 0.9, f"gram extremes in [{low}, {high}]"),
        _at_least("terminates_within_C_d_over_gamma_sq", in_iterations / trials, 0.99, "C = 40"),
        _at_most("final_gap_violations", gap_fail, 0, "r_k - l_k <= 9 d / gamma"),
        _at_most("mid_upper_violations", mid_fail, 0, "mid <= sum gamma / phi_j"),
        _at_most("mid_overshoot_excess", overshoot_excess, 0.0, "sum gamma / phi_j - mid < gamma / phi_(k-1)"),
        _at_most("conditional_window_violations", window_fail, 0, "r_k / l_k <= 1 + 8 gamma => (1 - 5 gamma, 1 + 5 gamma)"),
        _at_most("step_ratio_excess", step_ratio_excess, 1e-6, "s v^T (uI - B)^{-1} v <= gamma on a whitened pool"),
        _at_most("noise_controlling_violations", noise_fail, 0, "sum beta <= 3/2 and beta_j K_j <= eps / 2"),
    ]


def chernoff_suite(trials: int, seed: int, progress: bool = False, n: int = 2000, d: int = 10,
                   epsilon: float = 0.5, delta: float = 0.1) -> list[CheckResult]:
    V = whitened_normal_pool(n, d, seed)
    k_alpha = alpha_condition_number_from_evaluations(V)
    k = required_iid_size(k_alpha, d, epsilon, delta, 0.0)
    hits = sum(
        chernoff_trial(V, k, derive_seed(seed, trial)) <= epsilon
        for trial in tqdm(range(trials), desc="chernoff", disable=not progress)
    )
    return [_at_least("iid_spectral_deviation_frequency", hits / trials, 1.0 - delta, f"k = {k}, K_alpha = {k_alpha:.3f}")]


def recovery_suite(trials: int, seed: int, progress: bool = False, n: int = 20000, p: int = 10,
                   noise_sigma: float = 0.5, eps_list: tuple[float, ...] = (0.5, 0.25, 0.1)) -> list[CheckResult]:
    """
    Excess risk of the weighted fit relative to the noise level. Features are
    standard normal, so ||f - f*||_D^2 is the squared distance of the raw
    coefficients (intercept included).
    """
    checks = []
    for epsilon in eps_list:
        ratios = []
        for trial in tqdm(range(trials), desc=f"recovery eps={epsilon:g}", disable=not progress):
            ds = synth_regression(n, p, noise_sigma, derive_seed(seed, trial))
            basis = build_basis(ds.features, FeatureMap("affine", p))
            V = eval_basis_matrix(basis, ds.features)
            selection = select_bss(V, epsilon, derive_seed(seed, trial, 1))
            idx = selection.indices
            model = fit_weighted(V[idx], ds.targets[idx], selection.weight_vector, 0.0, basis.basis_id)
            coef = raw_coefficients(model, basis)
            truth = np.append(np.asarray(ds.provenance["w_star"]), 0.0)
            ratios.append(float(np.sum((coef - truth) ** 2)) / noise_sigma**2)
        checks.append(_at_most(f"excess_risk_ratio_eps={epsilon:g}", float(np.median(ratios)), 10.0 * epsilon,
                               "median over seeds"))
    return checks


SUITES = {
    "linalg": linalg_suite,
    "basis": basis_suite,
    "sampler": sampler_suite,
    "chernoff": chernoff_suite,
    "recovery": recovery_suite,
}


def run_suite(name: str, trials: int, seed: int, progress: bool = False) -> SuiteReport:
    """
    Runs one property suite.

    Args:
        name: Suite name, a key of SUITES.
        trials: Number of randomized trials (seeded runs) per property.
        seed: Master seed.
        progress: Show tqdm bars.

    Returns:
        SuiteReport; `passed` is False when any check failed.
    """
    if name not in SUITES:
        raise DomainError(f"Unknown suite {name!r}; expected one of {tuple(SUITES)}")
    if trials < 1:
        raise DomainError("trials must be >= 1.")
    checks = tuple(SUITES[name](trials, seed, progress))
    report = SuiteReport(name, trials, seed, checks)
    for check in checks:
        logger.info("%s/%s: %s (statistic %.6g, threshold %.6g)", name, check.name,
                    "PASS" if check.passed else "FAIL", check.statistic, check.threshold)
    return report
