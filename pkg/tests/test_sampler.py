"""Tests for the randomized BSS sampler, the uniform baseline and the sampling checks."""

import json
import math
from collections import OrderedDict

import numpy as np
import pytest

from active_regression.basis import FeatureMap, build_basis, eval_basis_matrix
from active_regression.errors import DomainError, IterationCapError, NumericalError, ShapeError
from active_regression.sampler import (
    Draw,
    SelectionResult,
    bss_constants,
    chernoff_trial,
    iid_sample_bound,
    required_iid_size,
    round_alpha_condition_numbers,
    select_bss,
    select_uniform,
    selection_from_json,
    selection_to_json,
    termination_report,
    verify_noise_controlling,
    verify_norm_preserving,
)


def _whitened_pool(n, d, seed):
    X = np.random.default_rng(seed).standard_normal((n, d - 1))
    return eval_basis_matrix(build_basis(X, FeatureMap("affine", d - 1)), X)


def _manual_selection(indices, weights, betas):
    draws = tuple(Draw(int(i), float(w), float(b)) for i, w, b in zip(indices, weights, betas))
    agg = OrderedDict()
    for draw in draws:
        agg[draw.index] = agg.get(draw.index, 0.0) + draw.s
    return SelectionResult(draws, OrderedDict(sorted(agg.items())), len(draws), 0.0, 1.0, 0.0, 0, 0.0, len(agg), None,
                           "uniform")


@pytest.fixture(scope="module")
def pool():
    return _whitened_pool(2000, 10, 0)


@pytest.fixture(scope="module")
def run(pool):
    return select_bss(pool, 0.25, 11)


class TestConstants:
    def test_mid_example(self):
        gamma, mid = bss_constants(2, 0.01, 1.0)
        assert gamma == pytest.approx(0.1)
        assert mid == pytest.approx(396.0, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            bss_constants(3, 0.0)
        with pytest.raises(DomainError):
            bss_constants(3, 1.5)
        with pytest.raises(DomainError):
            bss_constants(3, 0.5, c0=0.5)
        with pytest.raises(DomainError):
            bss_constants(3, 1.0, c0=1.0)


class TestSelectBss:
    def test_single_point_pool(self):
        V = np.ones((1, 1))
        selection = select_bss(V, 0.25, 3)
        assert all(draw.index == 0 for draw in selection.draws)
        assert list(selection.weights) == [0]
        assert 0.5 <= selection.gram_extremes.lambda_min <= selection.gram_extremes.lambda_max <= 1.5
        assert selection.betas.sum() <= 1.5

    def test_deterministic(self, pool):
        a = select_bss(pool, 0.5, 42)
        b = select_bss(pool, 0.5, 42)
        assert a.draws == b.draws
        assert a.weights == b.weights
        assert a.gram_extremes == b.gram_extremes

    def test_seed_changes_draws(self, pool):
        assert select_bss(pool, 0.5, 1).draws != select_bss(pool, 0.5, 2).draws

    def test_selection_invariants(self, run, pool):
        assert all(u > 0 for u in run.weights.values())
        assert np.all(run.betas > 0)
        assert run.betas.sum() <= 1.5 + 1e-9
        assert run.distinct_count <= min(pool.shape[0], run.iterations)
        assert run.distinct_count == len(run.weights)
        assert sum(run.weights.values()) == pytest.approx(sum(d.s for d in run.draws) / run.mid, rel=1e-12)

    def test_barrier_monotonicity(self, run):
        diag = run.diagnostics
        lower, upper = np.array(diag.lower_history), np.array(diag.upper_history)
        assert np.all(np.diff(lower) > 0)
        assert np.all(np.diff(upper) > 0)
        gamma = run.gamma
        expected = gamma / np.array(diag.potentials) * (1.0 / (1.0 - gamma) - 1.0 / (1.0 + gamma))
        np.testing.assert_allclose(np.diff(upper - lower), expected, rtol=1e-9)
        assert np.all(lower < upper)

    def test_termination_contracts(self, run):
        report = termination_report(run)
        d = run.diagnostics.dim
        assert report["gap_ok"]
        assert report["gap"] >= 8 * d / run.gamma
        assert report["mid_upper_ok"]
        assert report["overshoot"] < report["last_increment"]
        assert report["iterations_ok"]
        assert report["window_ok"]

    def test_step_ratio_stays_under_gamma(self, run):
        report = termination_report(run)
        assert 0.0 < report["max_step_ratio"] <= run.gamma * (1.0 + 1e-6)
        assert report["step_ratio_ok"]

    def test_gram_matches_norm_preserving_check(self, run, pool):
        ext = verify_norm_preserving(pool, run)
        assert ext.lambda_min == pytest.approx(run.gram_extremes.lambda_min, abs=1e-8)
        assert ext.lambda_max == pytest.approx(run.gram_extremes.lambda_max, abs=1e-8)
        assert ext.contained_in(0.5, 1.5)

    def test_first_round_alpha_condition_is_dimension(self, run):
        # round 0 samples proportionally to ||v||^2 on a whitened pool
        assert run.diagnostics.round_k_alpha[0] == pytest.approx(10.0, rel=1e-9)
        assert run.diagnostics.potentials[0] == pytest.approx(run.gamma, rel=1e-12)

    def test_zero_rows_never_sampled(self):
        V = _whitened_pool(300, 4, 5)
        V[0] = 0.0
        V[17] = 0.0
        selection = select_bss(V, 1.0, 8)
        assert 0 not in selection.weights
        assert 17 not in selection.weights

    def test_all_zero_pool(self):
        with pytest.raises(NumericalError):
            select_bss(np.zeros((5, 2)), 0.5, 0)

    def test_iteration_cap(self, pool):
        with pytest.raises(IterationCapError) as info:
            select_bss(pool, 0.25, 0, max_iters=3)
        assert info.value.partial["iterations"] == 3
        assert len(info.value.partial["potentials"]) == 3

    def test_bad_inputs(self):
        with pytest.raises(ShapeError):
            select_bss(np.zeros((0, 3)), 0.5, 0)
        with pytest.raises(NumericalError):
            select_bss(np.array([[np.inf, 1.0]]), 0.5, 0)
        with pytest.raises(DomainError):
            select_bss(np.ones((3, 1)), 0.0, 0)

    def test_rank_one_maintenance_above_fresh_dim(self):
        V = _whitened_pool(600, 66, 9)
        selection = select_bss(V, 0.25, 4)
        assert selection.diagnostics.refreshes < selection.iterations
        ext = verify_norm_preserving(V, selection)
        assert ext.contained_in(0.5, 1.5)
        assert termination_report(selection)["gap_ok"]

    def test_noise_controlling_across_seeds(self, pool):
        for seed in range(20):
            selection = select_bss(pool, 0.25, seed)
            budget_ok, per_round_ok = verify_noise_controlling(
                selection, round_alpha_condition_numbers(selection), 0.25
            )
            assert budget_ok and per_round_ok

    def test_importance_ratio_is_unbiased(self, pool):
        rng = np.random.default_rng(12)
        scores = np.einsum("ij,ij->i", pool, pool)
        n = pool.shape[0]
        h = pool[:, 0] ** 2 + pool[:, 1]
        draws = rng.choice(n, size=100_000, p=scores / scores.sum())
        weighted = scores.sum() / (n * scores[draws]) * h[draws]
        sigma = weighted.std() / math.sqrt(len(draws))
        assert abs(weighted.mean() - h.mean()) <= 3 * sigma


class TestSelectUniform:
    def test_single_index(self):
        selection = select_uniform(1, 5, 0)
        assert list(selection.weights) == [0]
        assert selection.weights[0] == pytest.approx(1.0)
        assert selection.betas.sum() == pytest.approx(1.0)
        assert selection.gamma == 0.0 and selection.mid == 1.0

    def test_betas_sum_to_one(self):
        selection = select_uniform(37, 91, 5)
        assert selection.betas.sum() == pytest.approx(1.0, rel=1e-12)
        assert sum(selection.weights.values()) == pytest.approx(1.0, rel=1e-12)

    def test_seeds_differ(self):
        a = sorted(d.index for d in select_uniform(1000, 100, 1).draws)
        b = sorted(d.index for d in select_uniform(1000, 100, 2).draws)
        assert a != b
        assert select_uniform(1000, 100, 1).draws == select_uniform(1000, 100, 1).draws

    def test_domain(self):
        with pytest.raises(DomainError):
            select_uniform(10, 0, 0)

    def test_termination_report_needs_bss(self):
        with pytest.raises(DomainError):
            termination_report(select_uniform(10, 3, 0))


class TestSampleSize:
    def test_example(self):
        assert required_iid_size(10, 10, 0.5, 0.1, 0.0) == 1106

    def test_rho_halves_denominator(self):
        base = iid_sample_bound(10, 10, 0.5, 0.1, 0.0)
        assert iid_sample_bound(10, 10, 0.5, 0.1, 1.0 / 20) == pytest.approx(2 * base, rel=1e-12)

    def test_epsilon_scaling(self):
        base = iid_sample_bound(7, 5, 0.4, 0.05, 0.0)
        assert iid_sample_bound(7, 5, 0.2, 0.05, 0.0) == pytest.approx(4 * base, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            required_iid_size(10, 10, 0.5, 0.1, 0.1)
        with pytest.raises(DomainError):
            required_iid_size(0.5, 10, 0.5, 0.1, 0.0)
        with pytest.raises(DomainError):
            required_iid_size(10, 10, 1.0, 0.1, 0.0)


class TestChecks:
    def test_uniform_weights_over_whole_pool(self, pool):
        n = pool.shape[0]
        selection = _manual_selection(range(n), [1.0 / n] * n, [1.0 / n] * n)
        ext = verify_norm_preserving(pool, selection)
        assert ext.lambda_min == pytest.approx(1.0, abs=1e-6)
        assert ext.lambda_max == pytest.approx(1.0, abs=1e-6)

    def test_single_point(self):
        selection = _manual_selection([0], [1.0], [1.0])
        ext = verify_norm_preserving(np.ones((1, 1)), selection)
        assert (ext.lambda_min, ext.lambda_max) == pytest.approx((1.0, 1.0))

    def test_index_out_of_range(self):
        with pytest.raises(ShapeError):
            verify_norm_preserving(np.ones((2, 1)), _manual_selection([5], [1.0], [1.0]))

    def test_budget_exceeded(self):
        eps = 0.1
        selection = _manual_selection([0, 1, 2], [1.0, 1.0, 1.0], [0.75, 0.75, eps])
        budget_ok, per_round_ok = verify_noise_controlling(selection, [0.01, 0.01, 0.01], eps)
        assert not budget_ok
        assert per_round_ok

    def test_uniform_baseline_budget(self, pool):
        k = required_iid_size(float(np.max(np.einsum("ij,ij->i", pool, pool))), 10, 0.5, 0.1, 0.0)
        selection = select_uniform(pool.shape[0], k, 3)
        budget_ok, _ = verify_noise_controlling(selection, round_alpha_condition_numbers(selection, pool), 0.5)
        assert budget_ok

    def test_uniform_rounds_need_pool(self):
        with pytest.raises(ShapeError):
            round_alpha_condition_numbers(select_uniform(5, 2, 0))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            verify_noise_controlling(_manual_selection([0], [1.0], [1.0]), [1.0, 2.0], 0.5)

    def test_chernoff_trial_concentrates(self, pool):
        assert chernoff_trial(pool, 20000, 0) < 0.2
        assert chernoff_trial(pool, 50, 0) >= 0.0


class TestSerialization:
    def test_round_trip(self, run):
        restored = selection_from_json(json.loads(json.dumps(selection_to_json(run))))
        assert restored.draws == run.draws
        assert restored.weights == run.weights
        assert restored.gram_extremes == run.gram_extremes
        assert (restored.iterations, restored.mid, restored.gamma, restored.seed) == (
            run.iterations, run.mid, run.gamma, run.seed)

    def test_uniform_has_null_extremes(self):
        obj = selection_to_json(select_uniform(4, 3, 0))
        assert obj["gram_lambda_min"] is None
        assert selection_from_json(obj).gram_extremes is None
