"""Tests for CSV ingestion, synthetic generators, splitting and the RMSE metric."""

import math

import numpy as np
import pytest

from active_regression.basis import FeatureMap, build_basis, eval_basis_matrix
from active_regression.data import (
    Dataset,
    load_csv,
    quadratic_target,
    rmse,
    split,
    standardize,
    subset,
    synth_anisotropic,
    synth_make_regression,
    synth_quadratic,
    synth_regression,
    write_csv,
)
from active_regression.erm import fit_full, predict_many, raw_coefficients
from active_regression.errors import DomainError, IoError, SchemaError, ShapeError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_basic(self, tmp_path):
        ds = load_csv(_write(tmp_path / "d.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n"), "y")
        assert ds.features.shape == (3, 2)
        np.testing.assert_array_equal(ds.targets, [3.0, 6.0, 9.0])
        assert ds.feature_names == ("a", "b")
        assert ds.provenance["rejected_rows"] == 0

    def test_target_column_anywhere(self, tmp_path):
        ds = load_csv(_write(tmp_path / "d.csv", "y,a\n1,10\n2,20\n"), "y")
        np.testing.assert_array_equal(ds.features[:, 0], [10.0, 20.0])

    def test_drops_non_numeric_feature_row(self, tmp_path):
        ds = load_csv(_write(tmp_path / "d.csv", "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n"), "y")
        assert ds.n == 2
        assert ds.provenance["rejected_rows"] == 1
        np.testing.assert_array_equal(ds.targets, [3.0, 9.0])

    def test_drops_non_finite_and_empty(self, tmp_path):
        ds = load_csv(_write(tmp_path / "d.csv", "a,y\n1,2\ninf,3\n4,\n5,6\n"), "y")
        assert ds.n == 2
        assert ds.provenance["rejected_rows"] == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            load_csv(str(tmp_path / "missing.csv"))

    def test_missing_target(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(_write(tmp_path / "d.csv", "a,b\n1,2\n"), "y")

    def test_text_target(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(_write(tmp_path / "d.csv", "a,y\n1,2\n3,high\n"), "y")

    def test_no_usable_rows(self, tmp_path):
        with pytest.raises(SchemaError):
            load_csv(_write(tmp_path / "d.csv", "a,y\nx,1\n"), "y")

    def test_round_trip_is_bit_exact(self, tmp_path):
        ds = synth_regression(200, 3, 0.5, 4)
        path = str(tmp_path / "out" / "data.csv")
        write_csv(ds, path, "target")
        restored = load_csv(path, "target")
        np.testing.assert_array_equal(restored.features, ds.features)
        np.testing.assert_array_equal(restored.targets, ds.targets)
        assert restored.feature_names == ds.feature_names


class TestDataset:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ShapeError):
            Dataset(np.ones((2, 2)), np.ones(3), ("a", "b"), "x")
        with pytest.raises(ShapeError):
            Dataset(np.ones((2, 2)), np.ones(2), ("a",), "x")
        with pytest.raises(ShapeError):
            Dataset(np.ones((0, 2)), np.ones(0), ("a", "b"), "x")


class TestSynthetic:
    def test_deterministic(self):
        a = synth_regression(100, 4, 0.5, 7)
        b = synth_regression(100, 4, 0.5, 7)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.targets, b.targets)
        assert a.provenance == b.provenance
        assert not np.array_equal(a.targets, synth_regression(100, 4, 0.5, 8).targets)

    def test_noiseless_recovery(self):
        ds = synth_regression(50, 5, 0.0, 3)
        basis = build_basis(ds.features, FeatureMap("affine", 5))
        model = fit_full(eval_basis_matrix(basis, ds.features), ds.targets, basis.basis_id)
        coef = raw_coefficients(model, basis)
        np.testing.assert_allclose(coef[:-1], ds.provenance["w_star"], atol=1e-8)
        assert abs(coef[-1]) <= 1e-8

    def test_ols_test_rmse_matches_noise(self):
        sigma = 0.5
        ds = synth_regression(30000, 10, sigma, 0)
        sp = split(ds, 0.2, 1)
        pool, test = subset(ds, sp.pool_indices), subset(ds, sp.test_indices)
        basis = build_basis(pool.features, FeatureMap("affine", 10))
        model = fit_full(eval_basis_matrix(basis, pool.features), pool.targets, basis.basis_id)
        value = rmse(predict_many(model, basis, test.features), test.targets)
        assert abs(value - sigma) <= 3 * sigma / math.sqrt(2 * test.n)

    def test_anisotropic_variances(self):
        ds = synth_anisotropic(20000, 4, 1000.0, 0.1, 2)
        variances = ds.features.var(axis=0)
        np.testing.assert_allclose(variances, [1.0, 10.0, 100.0, 1000.0], rtol=0.05)

    def test_quadratic_target(self):
        ds = synth_quadratic(300, 3, 4, 0.0, 5)
        np.testing.assert_allclose(ds.targets, quadratic_target(ds.provenance, ds.features), rtol=1e-12)
        basis = build_basis(ds.features, FeatureMap("quadratic", 3))
        model = fit_full(eval_basis_matrix(basis, ds.features), ds.targets, basis.basis_id)
        np.testing.assert_allclose(predict_many(model, basis, ds.features), ds.targets, atol=1e-7)

    def test_make_regression_keeps_coefficients(self):
        ds = synth_make_regression(100, 3, 0.0, 9)
        np.testing.assert_allclose(ds.features @ np.asarray(ds.provenance["w_star"]), ds.targets, atol=1e-8)

    def test_domain(self):
        with pytest.raises(DomainError):
            synth_regression(0, 3, 0.5, 0)
        with pytest.raises(DomainError):
            synth_regression(10, 3, -1.0, 0)
        with pytest.raises(DomainError):
            synth_anisotropic(10, 3, 0.5, 0.1, 0)
        with pytest.raises(DomainError):
            synth_quadratic(10, 3, 0, 0.1, 0)


class TestSplit:
    def test_sizes_and_partition(self):
        sp = split(10, 0.2, 3)
        assert len(sp.test_indices) == 2
        assert len(sp.pool_indices) == 8
        assert sorted(np.concatenate([sp.pool_indices, sp.test_indices]).tolist()) == list(range(10))

    def test_deterministic(self):
        a, b = split(100, 0.3, 5), split(100, 0.3, 5)
        np.testing.assert_array_equal(a.test_indices, b.test_indices)

    def test_test_frequency(self):
        counts = np.zeros(10)
        for seed in range(1000):
            counts[split(10, 0.2, seed).test_indices] += 1
        assert np.all(np.abs(counts / 1000 - 0.2) <= 0.05)

    def test_domain(self):
        with pytest.raises(DomainError):
            split(10, 0.0, 0)
        with pytest.raises(DomainError):
            split(10, 1.0, 0)
        with pytest.raises(DomainError):
            split(2, 0.1, 0)


class TestStandardize:
    def test_uses_training_statistics(self):
        rng = np.random.default_rng(0)
        train = Dataset(rng.normal(5.0, 3.0, size=(500, 2)), rng.standard_normal(500), ("a", "b"), "t")
        other = Dataset(np.array([[5.0, 5.0]]), np.array([1.0]), ("a", "b"), "o")
        scaled_train, scaled_other = standardize(train, other)
        np.testing.assert_allclose(scaled_train.features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(scaled_train.features.std(axis=0), 1.0, rtol=1e-12)
        np.testing.assert_array_equal(scaled_train.targets, train.targets)
        expected = (5.0 - train.features.mean(axis=0)) / train.features.std(axis=0)
        np.testing.assert_allclose(scaled_other.features[0], expected, rtol=1e-12)

    def test_constant_column(self):
        train = Dataset(np.array([[1.0, 2.0], [1.0, 4.0]]), np.zeros(2), ("a", "b"), "t")
        scaled, _ = standardize(train, train)
        np.testing.assert_array_equal(scaled.features[:, 0], [0.0, 0.0])


class TestRmse:
    def test_examples(self):
        y = np.array([1.0, -2.0, 3.5])
        assert rmse(y, y) == 0.0
        assert rmse(y + 0.75, y) == pytest.approx(0.75, rel=1e-12)

    def test_matches_formula(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal(100), rng.standard_normal(100)
        assert rmse(a, b) == pytest.approx(math.sqrt(np.mean((a - b) ** 2)), abs=1e-12)

    def test_invalid(self):
        with pytest.raises(ShapeError):
            rmse([1.0, 2.0], [1.0])
        with pytest.raises(ShapeError):
            rmse([], [])
