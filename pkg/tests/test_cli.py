"""End-to-end tests of the command-line interface.

Core claims:
    - each subcommand writes its documented artifacts
    - repeated runs are byte-identical (determinism through the CLI)
    - the full simulate -> constrain -> align -> discover -> evaluate
      pipeline holds together on a small instance
    - failures map to the documented exit codes
    - bench runs a grid, summarizes it, and resumes without recomputation
"""
from __future__ import annotations

import json

import numpy as np
import pytest

from roads.cli import main
from roads.io import read_matrix_csv


def run(args):
    return main([str(a) for a in args])


FAST = ["--nv", "6", "--k", "1.0", "--nd", "30", "--max-iters", "150"]


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", *FAST, "--seed", "0", "--out", out]) == 0
    return out


class TestSimulate:
    def test_writes_artifacts(self, sim_dir):
        assert (sim_dir / "truth_seed0.csv").exists()
        assert (sim_dir / "weights_seed0.csv").exists()
        assert (sim_dir / "data_seed0.csv").exists()
        X = read_matrix_csv(sim_dir / "data_seed0.csv")
        assert X.shape == (30, 6)

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["simulate", *FAST, "--seed", "2", "--out", out]) == 0
        assert (a / "data_seed2.csv").read_bytes() == (b / "data_seed2.csv").read_bytes()

    def test_nonlinear_has_no_weight_matrix(self, tmp_path):
        out = tmp_path / "mlp"
        assert run(["simulate", *FAST, "--sem", "mlp", "--out", out]) == 0
        assert not (out / "weights_seed0.csv").exists()
        assert (out / "data_seed0.csv").exists()


class TestConstrain:
    def test_constraint_budgets(self, sim_dir, tmp_path, capsys):
        bc_path = tmp_path / "bc.csv"
        assert run([
            "constrain", sim_dir / "truth_seed0.csv", bc_path,
            "--pa", "0.5", "--pb", "0.0", "--pc", "1.0",
        ]) == 0
        Bc = read_matrix_csv(bc_path, dtype=np.int8)
        truth = read_matrix_csv(sim_dir / "truth_seed0.csv", dtype=np.int8)
        n_edges = int(truth.sum())
        expected = int(np.floor(0.5 * n_edges + 0.5))
        assert int((Bc == 1).sum()) == expected
        assert int((Bc == -1).sum()) == expected

    def test_missing_truth_is_data_error(self, tmp_path):
        assert run(["constrain", tmp_path / "nope.csv", tmp_path / "bc.csv"]) == 3


class TestAlignCommand:
    def test_writes_prior(self, sim_dir, tmp_path):
        bc_path = tmp_path / "bc.csv"
        run(["constrain", sim_dir / "truth_seed0.csv", bc_path, "--pa", "0.5"])
        out = tmp_path / "aligned"
        assert run([
            "align", sim_dir / "data_seed0.csv", bc_path, *FAST, "--out", out,
        ]) == 0
        assert (out / "prior.csv").exists()
        meta = json.loads((out / "prior.json").read_text())
        assert meta["surrogate_kind"] == "ols"
        assert meta["tau"] == 0.01


class TestDiscover:
    def test_pipeline_with_truth(self, sim_dir, tmp_path):
        bc_path = tmp_path / "bc.csv"
        run(["constrain", sim_dir / "truth_seed0.csv", bc_path, "--pa", "0.5"])
        out = tmp_path / "disc"
        assert run([
            "discover", sim_dir / "data_seed0.csv", bc_path,
            "--truth", sim_dir / "truth_seed0.csv", *FAST, "--out", out,
        ]) == 0
        W = read_matrix_csv(out / "weights.csv")
        assert W.shape == (6, 6)
        trace = (out / "trace.csv").read_text().splitlines()
        assert trace[0].startswith("iteration,")
        report = json.loads((out / "report.json").read_text())
        assert 0.0 <= report["f1"] <= 1.0

    def test_no_constraints_baseline(self, sim_dir, tmp_path):
        out = tmp_path / "disc"
        assert run([
            "discover", sim_dir / "data_seed0.csv", *FAST,
            "--method", "no_prior", "--out", out,
        ]) == 0
        assert (out / "weights.csv").exists()

    def test_dimension_mismatch_is_data_error(self, sim_dir, tmp_path):
        bad = tmp_path / "bad_bc.csv"
        bad.write_text("V0,V1\n0,1\n0,0\n")
        assert run(["discover", sim_dir / "data_seed0.csv", bad, *FAST]) == 3

    def test_bad_flag_value_is_config_error(self, sim_dir, tmp_path):
        assert run([
            "discover", sim_dir / "data_seed0.csv", *FAST, "--eta", "-1",
        ]) == 2


class TestEvaluate:
    def test_report_printed_and_saved(self, sim_dir, tmp_path, capsys):
        out_file = tmp_path / "report.json"
        assert run([
            "evaluate", sim_dir / "weights_seed0.csv", sim_dir / "truth_seed0.csv",
            "--out-file", out_file,
        ]) == 0
        report = json.loads(out_file.read_text())
        # the true weight matrix scores perfectly against its own support
        assert report["f1"] == 1.0
        assert report["shd"] == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed == report


GRID = """
graph: {{n_v: 6, k: 1.0}}
sem: {{n_d: 30}}
mgda: {{max_iters: 120}}
seeds: [0, 1]
grid:
  method: [roads, no_prior]
  priors.p_b: [{pbs}]
"""


class TestBench:
    def test_grid_and_summary(self, tmp_path):
        grid = tmp_path / "grid.yaml"
        grid.write_text(GRID.format(pbs="0.0"))
        out = tmp_path / "bench"
        assert run(["bench", grid, "--out", out]) == 0
        rows = (out / "results.csv").read_text().splitlines()
        assert len(rows) == 1 + 4  # header + 2 methods x 2 seeds
        summary = (out / "summary.csv").read_text().splitlines()
        assert len(summary) == 1 + 2  # header + 2 cells
        assert "f1_mean" in summary[0]

    def test_resume_skips_done_rows(self, tmp_path, capsys):
        grid = tmp_path / "grid.yaml"
        grid.write_text(GRID.format(pbs="0.0"))
        out = tmp_path / "bench"
        run(["bench", grid, "--out", out])
        capsys.readouterr()
        before = (out / "results.csv").read_text()
        assert run(["bench", grid, "--out", out]) == 0
        assert "0 new rows" in capsys.readouterr().out
        assert (out / "results.csv").read_text() == before

    def test_resume_adds_only_new_cells(self, tmp_path):
        grid = tmp_path / "grid.yaml"
        grid.write_text(GRID.format(pbs="0.0"))
        out = tmp_path / "bench"
        run(["bench", grid, "--out", out])
        grid.write_text(GRID.format(pbs="0.0, 0.5"))
        assert run(["bench", grid, "--out", out]) == 0
        rows = (out / "results.csv").read_text().splitlines()
        assert len(rows) == 1 + 8

    def test_bad_grid_is_config_error(self, tmp_path):
        grid = tmp_path / "grid.yaml"
        grid.write_text("- not\n- a\n- mapping\n")
        assert run(["bench", grid, "--out", tmp_path / "b"]) == 2
