"""End-to-end tests of the experiment runners and their CSV output."""

import csv
import math
import os

import pytest

from mildns.config import ExperimentConfig
from mildns.errors import ExponentWindowError
from mildns.experiments import HEADERS, emit_csv, run_experiment


# (p values, q values) per smoothness level, all inside the product window for d = 2
PRODUCT_SWEEP = {
    0.0: ((2.5, 3.0, 4.0), (2.5, 3.0, 4.0)),
    0.5: ((2.0, 2.5, 3.0), (2.0, 3.0)),
    1.0: ((1.6, 1.8), (1.6, 1.8, 1.9)),
}


def small_config(experiment, tmp_path, **changes):
    base = dict(experiment=experiment, n=16, count=2, band_high=2, output=str(tmp_path / f"{experiment}.csv"),
                timestamp=False)
    base.update(changes)
    return ExperimentConfig(**base)


def read_rows(path):
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


class TestEmitCsv:
    def test_header_only_for_empty_rows(self, tmp_path):
        path = emit_csv([], str(tmp_path / "empty.csv"), ["a", "b"])
        assert open(path, encoding="utf-8").read() == "a,b\n"

    def test_cell_formats(self, tmp_path):
        rows = [{"x": 0.1, "flag": True, "count": 3, "missing": None, "big": math.inf}]
        path = emit_csv(rows, str(tmp_path / "cells.csv"), ["x", "flag", "count", "missing", "big"])
        line = open(path, encoding="utf-8").read().splitlines()[1]
        assert line == "1.0000000000000001e-01,true,3,,inf"

    def test_comment_line(self, tmp_path):
        path = emit_csv([], str(tmp_path / "c.csv"), ["a"], comment="hello")
        assert open(path, encoding="utf-8").read().startswith("# hello\n")


class TestCorpusExperiment:
    def test_rows_and_dumps(self, tmp_path):
        dump_dir = tmp_path / "fields"
        cfg = small_config("corpus", tmp_path, dump_dir=str(dump_dir))
        result = run_experiment(cfg)
        assert len(result.rows) == 2
        assert sorted(os.listdir(dump_dir)) == ["field_000.txt", "field_001.txt"]
        for row in read_rows(result.path):
            assert float(row["l2_norm"]) > 0
            assert float(row["max_divergence"]) < 1e-10

    def test_dilations_extend_corpus(self, tmp_path):
        cfg = small_config("corpus", tmp_path, dilations=(1, 2))
        assert len(run_experiment(cfg, write=False).rows) == 4

    def test_output_is_deterministic(self, tmp_path):
        first = run_experiment(small_config("corpus", tmp_path, output=str(tmp_path / "a.csv")))
        second = run_experiment(small_config("corpus", tmp_path, output=str(tmp_path / "b.csv")))
        assert open(first.path, "rb").read() == open(second.path, "rb").read()

    def test_timestamp_comment(self, tmp_path):
        result = run_experiment(small_config("corpus", tmp_path, timestamp=True))
        first_line = open(result.path, encoding="utf-8").readline()
        assert first_line.startswith("# mildns corpus ")


class TestNormsExperiment:
    def test_rows(self, tmp_path):
        cfg = small_config("norms", tmp_path, r=(1.0, math.inf), s=(0.0, 0.5))
        result = run_experiment(cfg)
        rows = read_rows(result.path)
        assert len(rows) == 8
        assert list(rows[0].keys()) == HEADERS["norms"]
        for row in rows:
            assert row["degenerate"] == "false"
            assert float(row["nesting_ratio"]) <= 1 + 1e-12
            assert math.isfinite(float(row["besov"]))

    def test_window(self, tmp_path):
        with pytest.raises(ExponentWindowError, match="s < d/q"):
            run_experiment(small_config("norms", tmp_path, s=(1.0,)))


class TestEmbeddingExperiment:
    def test_ratios_stable_under_refinement(self, tmp_path):
        cfg = small_config("embedding", tmp_path, n=32, refinements=2, band_high=4, q=(2.0,), r=(2.0,),
                           s=(0.0,), q_tilde=(4.0,))
        rows = run_experiment(cfg, write=False).rows
        summaries = [row for row in rows if row["kind"] == "summary"]
        assert [row["n"] for row in summaries] == [32, 64]
        assert summaries[0]["drift"] is None
        assert summaries[1]["drift"] < 0.1
        assert all(0 < row["besov_ratio"] < math.inf for row in summaries)

    def test_window(self, tmp_path):
        with pytest.raises(ExponentWindowError, match="1/q~ < 1/q"):
            run_experiment(small_config("embedding", tmp_path, q=(2.0,), q_tilde=(2.0,)), write=False)


class TestProductExperiment:
    def test_holder_case(self, tmp_path):
        cfg = small_config("product", tmp_path, n=32, count=3, band_high=4, s=(0.0,), p=(3.0,), q=(3.0,))
        rows = run_experiment(cfg, write=False).rows
        pairs = [row for row in rows if row["kind"] == "pair"]
        assert len(pairs) == 3
        assert all(row["r"] == pytest.approx(1.5) for row in rows)
        assert all(row["ratio"] <= 1 + 1e-8 for row in pairs)

    def test_fractional_ratio_stable(self, tmp_path):
        cfg = small_config("product", tmp_path, n=32, refinements=2, count=3, band_high=4,
                           s=(0.5,), p=(2.0,), q=(2.0,))
        summaries = [row for row in run_experiment(cfg, write=False).rows if row["kind"] == "summary"]
        assert len(summaries) == 2
        assert summaries[1]["drift"] < 0.1

    def test_sweep_covers_twenty_tuples(self):
        assert sum(len(p) * len(q) for p, q in PRODUCT_SWEEP.values()) >= 20

    @pytest.mark.parametrize("s", sorted(PRODUCT_SWEEP))
    def test_exponent_sweep(self, tmp_path, s):
        p, q = PRODUCT_SWEEP[s]
        cfg = small_config("product", tmp_path, n=32, refinements=2, count=3, band_high=4, s=(s,), p=p, q=q)
        rows = run_experiment(cfg, write=False).rows
        summaries = [row for row in rows if row["kind"] == "summary"]
        assert len(summaries) == 2 * len(p) * len(q)
        assert all(0 < row["ratio"] < math.inf for row in summaries)
        assert all(row["drift"] < 0.1 for row in summaries if row["n"] == 64)
        if s == 0.0:
            assert all(row["ratio"] <= 1 + 1e-8 for row in rows if row["kind"] == "pair")

    def test_window(self, tmp_path):
        with pytest.raises(ExponentWindowError, match="1/p"):
            run_experiment(small_config("product", tmp_path, s=(0.5,), p=(1.2,), q=(1.2,)), write=False)


class TestBilinearExperiment:
    def test_rows(self, tmp_path):
        cfg = small_config("bilinear", tmp_path, q=(2.0,), r=(3.0,), s=(0.0,), q_tilde=(3.0,),
                           T=(0.25, 0.5), M=8)
        result = run_experiment(cfg)
        kinds = [row["kind"] for row in result.rows]
        assert kinds.count("pair") == 6 and kinds.count("summary") == 2 and kinds[-1] == "spread"
        spread = result.rows[-1]
        assert spread["kato_ratio"] >= 1.0
        assert all(row["kato_ratio"] > 0 for row in result.rows if row["kind"] == "pair")

    def test_window(self, tmp_path):
        with pytest.raises(ExponentWindowError):
            run_experiment(small_config("bilinear", tmp_path, q_tilde=(2.0,)), write=False)


class TestSolverExperiment:
    def test_shear_row(self, tmp_path):
        report_dir = tmp_path / "reports"
        cfg = small_config("solve", tmp_path, family="single_mode", count=1, q=(2.0,), r=(2.0,), s=(0.0,),
                           q_tilde=(3.0,), T=(0.25,), M=16, delta_gate=1.0, oracle_steps=64,
                           report_dir=str(report_dir))
        result = run_experiment(cfg)
        (row,) = result.rows
        assert row["converged"] and row["iterations"] == 1
        assert row["oracle_distance"] <= 1e-10 and row["oracle_unstable"] is False
        assert len(os.listdir(report_dir)) == 1
        (written,) = read_rows(result.path)
        assert written["converged"] == "true" and written["iterations"] == "1"

    def test_sigma_gate_sets_critical_besov_threshold(self, tmp_path):
        common = dict(family="single_mode", count=1, q=(2.0,), r=(2.0,), s=(0.0,), q_tilde=(3.0,),
                      T=(0.25,), M=16, delta_gate=1.0, oracle_steps=64)
        (strict,) = run_experiment(small_config("solve", tmp_path, sigma_gate=1e-6, **common), write=False).rows
        (loose,) = run_experiment(small_config("solve", tmp_path, sigma_gate=1e6, **common), write=False).rows
        assert strict["besov_gate_lhs"] == loose["besov_gate_lhs"] > 0
        assert strict["besov_gate_passes"] is False and loose["besov_gate_passes"] is True
        assert strict["delta"] == loose["delta"] == 1.0

    def test_calibrated_delta(self, tmp_path):
        cfg = small_config("solve", tmp_path, count=2, q=(2.0,), r=(2.0,), s=(0.0,), q_tilde=(3.0,),
                           T=(0.25,), M=16, amplitudes=(0.01,), delta_gate=0.0, oracle_steps=64)
        rows = run_experiment(cfg, write=False).rows
        assert len(rows) == 2
        assert all(0 < row["delta"] < math.inf for row in rows)
        assert all(row["converged"] for row in rows)
