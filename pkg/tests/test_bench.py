"""Tests for the sweep harness and report emission."""

import json
import math

import numpy as np
import pandas as pd
import pytest

from active_regression.basis import FeatureMap, build_basis, eval_basis_matrix
from active_regression.bench import (
    SweepCell,
    SweepRow,
    emit_plot_data,
    emit_report,
    epsilon_sweep,
    k_sweep_vs_uniform,
    reference_deviation,
    render_markdown,
    rows_from_json,
)
from active_regression.config import META_SUFFIX, REFERENCE_ROWS, REPORT_COLUMNS
from active_regression.data import Dataset, rmse, split, subset, synth_anisotropic, synth_regression
from active_regression.erm import fit_full, fit_weighted, predict_many
from active_regression.errors import DomainError
from active_regression.sampler import select_bss
from active_regression.utilities import artifact_meta, derive_seed, read_json


@pytest.fixture(scope="module")
def small():
    return synth_regression(50, 2, 0.5, 0)


@pytest.fixture(scope="module")
def medium():
    return synth_regression(2000, 4, 0.5, 1)


def _row(setting, selected, rmse_value, seeds=2):
    cells = tuple(SweepCell(s, setting, selected=selected, rmse=rmse_value) for s in range(seeds))
    return SweepRow(setting, float(selected), 0.0, rmse_value, 0.0, seeds, cells=cells)


class TestEpsilonSweep:
    def test_replays_by_hand(self, small):
        rows = epsilon_sweep(small, [0.5], [7], test_frac=0.2, progress=False)
        assert [row.setting for row in rows] == ["full", "eps=0.5"]

        parts = split(small, 0.2, 7)
        pool, test = subset(small, parts.pool_indices), subset(small, parts.test_indices)
        basis = build_basis(pool.features, FeatureMap("affine", 2))
        V = eval_basis_matrix(basis, pool.features)
        full = fit_full(V, pool.targets, basis.basis_id)
        selection = select_bss(V, 0.5, derive_seed(7, 0), 3.0)
        idx = selection.indices
        model = fit_weighted(V[idx], pool.targets[idx], selection.weight_vector, 0.0, basis.basis_id)

        assert rows[0].selected_mean == pool.n
        assert rows[0].rmse_mean == rmse(predict_many(full, basis, test.features), test.targets)
        assert rows[1].selected_mean == selection.distinct_count
        assert rows[1].rmse_mean == rmse(predict_many(model, basis, test.features), test.targets)
        assert rows[1].seeds == 1
        assert rows[1].selected_std == 0.0

    def test_deterministic_across_workers(self, medium):
        serial = epsilon_sweep(medium, [1.0, 0.5], [0, 1, 2], progress=False)
        threaded = epsilon_sweep(medium, [1.0, 0.5], [0, 1, 2], workers=3, progress=False)
        for a, b in zip(serial, threaded):
            assert (a.setting, a.selected_mean, a.rmse_mean, a.rmse_std) == (b.setting, b.selected_mean, b.rmse_mean,
                                                                            b.rmse_std)

    def test_selected_grows_as_epsilon_shrinks(self, medium):
        rows = epsilon_sweep(medium, [1.0, 0.25, 0.05], [3], progress=False)
        selected = [row.selected_mean for row in rows[1:]]
        assert selected[0] < selected[1] < selected[2] <= rows[0].selected_mean

    def test_failed_cells_are_reported(self):
        tiny = Dataset(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), ("x",), "tiny")
        rows = epsilon_sweep(tiny, [0.5], [0, 1], test_frac=0.2, progress=False)
        assert len(rows) == 2
        for row in rows:
            assert row.seeds == 0
            assert math.isnan(row.rmse_mean)
            assert len(row.cells) == 2
            assert all(not cell.ok and "DomainError" in cell.error for cell in row.cells)

    def test_invalid_lists(self, small):
        with pytest.raises(DomainError):
            epsilon_sweep(small, [], [0], progress=False)
        with pytest.raises(DomainError):
            epsilon_sweep(small, [0.5], [], progress=False)
        with pytest.raises(DomainError):
            epsilon_sweep(small, [1.5], [0], progress=False)
        with pytest.raises(DomainError):
            epsilon_sweep(small, [0.5], [0], workers=0, progress=False)


class TestKSweep:
    def test_pairs_share_k(self):
        ds = synth_anisotropic(1500, 3, 100.0, 0.5, 2)
        rows = k_sweep_vs_uniform(ds, [1.0, 0.5], [0, 1], progress=False)
        assert [row.strategy for row in rows] == ["bss", "uniform", "bss", "uniform"]
        for bss, uniform in (rows[0:2], rows[2:4]):
            assert bss.k == uniform.k
            assert bss.setting.endswith("/bss") and uniform.setting.endswith("/uniform")
            assert bss.setting.split("/")[0] == uniform.setting.split("/")[0]
            for b_cell, u_cell in zip(bss.cells, uniform.cells):
                assert b_cell.seed == u_cell.seed
                assert b_cell.k == u_cell.k
        assert rows[0].k < rows[2].k


class TestReports:
    def test_json_round_trip(self, tmp_path):
        row = _row("eps=1", 139, 0.53)
        path = str(tmp_path / "report.json")
        emit_report([row], "json", path, meta={"seed": 0})
        document = read_json(path)
        assert document["columns"] == list(REPORT_COLUMNS)
        assert document["std_estimator"] == "population"
        restored = rows_from_json(document)[0]
        assert (restored.setting, restored.selected_mean, restored.rmse_mean, restored.seeds) == ("eps=1", 139.0, 0.53,
                                                                                                  2)
        assert restored.cells == row.cells

    def test_json_keeps_failures(self, tmp_path):
        failed = SweepCell(4, "eps=1", epsilon=1.0, error="RankError: singular")
        row = SweepRow("eps=1", math.nan, math.nan, math.nan, math.nan, 0, epsilon=1.0, cells=(failed,))
        path = str(tmp_path / "report.json")
        emit_report([row], "json", path)
        document = read_json(path)
        assert document["rows"][0]["rmse_mean"] is None
        assert document["failures"][0]["seed"] == 4

    def test_empty_documents(self, tmp_path):
        for fmt in ("json", "csv", "markdown"):
            path = str(tmp_path / f"empty.{fmt}")
            emit_report([], fmt, path)
        assert read_json(str(tmp_path / "empty.json"))["rows"] == []
        assert list(pd.read_csv(tmp_path / "empty.csv").columns) == list(REPORT_COLUMNS)
        assert len((tmp_path / "empty.markdown").read_text().strip().splitlines()) == 2

    def test_markdown_rows(self):
        text = render_markdown([_row("full", 24000, 0.507), _row("eps=1", 139, 0.53)])
        lines = text.strip().splitlines()
        assert len(lines) == 4
        assert lines[2].startswith("| full |")
        assert all(line.startswith("|") and line.endswith("|") for line in lines)

    def test_csv_columns(self, tmp_path):
        path = tmp_path / "report.csv"
        emit_report([_row("full", 100, 0.5)], "csv", str(path))
        frame = pd.read_csv(path)
        assert list(frame.columns) == list(REPORT_COLUMNS)
        assert frame.loc[0, "setting"] == "full"

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DomainError):
            emit_report([], "xml", str(tmp_path / "x"))

    def test_plot_data(self, tmp_path):
        rows = [
            SweepRow("k=100/bss", 90.0, 1.0, 0.6, 0.01, 2, epsilon=1.0, k=100.0, strategy="bss"),
            SweepRow("k=100/uniform", 95.0, 1.0, 0.7, 0.02, 2, epsilon=1.0, k=100.0, strategy="uniform"),
        ]
        path = tmp_path / "plot.csv"
        emit_plot_data(rows, str(path))
        frame = pd.read_csv(path)
        assert list(frame["strategy"]) == ["bss", "uniform"]
        np.testing.assert_allclose(frame["rmse_mean"], [0.6, 0.7])

    def test_metadata_in_every_format(self, tmp_path):
        meta = artifact_meta("sweep", {"eps_list": [1.0], "seeds": [0, 1]})
        for fmt in ("json", "csv", "markdown"):
            emit_report([_row("full", 100, 0.5)], fmt, str(tmp_path / f"report.{fmt}"), meta)
        assert read_json(str(tmp_path / "report.json"))["meta"] == meta
        assert read_json(str(tmp_path / f"report.csv{META_SUFFIX}")) == meta
        first = (tmp_path / "report.markdown").read_text().splitlines()[0]
        assert first.startswith("<!-- ") and first.endswith(" -->")
        assert json.loads(first[len("<!-- "):-len(" -->")]) == meta
        assert render_markdown([_row("full", 100, 0.5)]) in (tmp_path / "report.markdown").read_text()

    def test_plot_data_metadata(self, tmp_path):
        rows = [SweepRow("k=10/bss", 9.0, 1.0, 0.6, 0.01, 2, epsilon=1.0, k=10.0, strategy="bss")]
        path = str(tmp_path / "plot.csv")
        emit_plot_data(rows, path, artifact_meta("ksweep", {"plot_out": path}))
        assert read_json(path + META_SUFFIX)["flags"]["plot_out"] == path
        assert list(pd.read_csv(path)["strategy"]) == ["bss"]

    def test_reference_deviation(self):
        notes = reference_deviation([_row("eps=1", 139, 0.53), _row("eps=0.5", 300, 0.52)], REFERENCE_ROWS["synthetic"])
        assert len(notes) == 1
        assert notes[0]["setting"] == "eps=1"
        assert notes[0]["rmse_rel_diff"] == pytest.approx(0.0)
        assert notes[0]["data_dependent"]
