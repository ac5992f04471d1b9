import json

import numpy as np
import pytest

from jhsvd import matio
from jhsvd.blockkernel import Signature
from jhsvd.cli import main

R4_TABLE = "4 3 2\n1:2 3:4\n1:3 2:4\n1:4 2:3\n"


def run_cli(*args):
    return main(list(args))


class TestStrategyGen:
    def test_row4_table(self, capsys):
        assert run_cli("strategy", "gen", "--kind", "row", "--n", "4") == 0
        assert capsys.readouterr().out == R4_TABLE

    def test_expand_flag(self, capsys):
        rc = run_cli("strategy", "gen", "--kind", "row", "--n", "4", "--expand", "1")
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "8 7 4"

    def test_expand_rejected_for_baselines(self, capsys):
        rc = run_cli("strategy", "gen", "--kind", "bl", "--n", "4", "--expand", "1")
        assert rc == 2

    def test_to_file(self, tmp_path, capsys):
        out = tmp_path / "s.txt"
        assert run_cli("strategy", "gen", "--kind", "rrow", "--n", "8",
                       "--out", str(out)) == 0
        assert matio.load_strategy(out).n == 8

    def test_unknown_flag_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("strategy", "gen", "--bogus")
        assert exc.value.code == 2

    def test_budget_exceeded_is_numeric_failure(self, capsys):
        rc = run_cli("strategy", "gen", "--kind", "row", "--n", "36")
        assert rc == 3


@pytest.fixture()
def problem(tmp_path):
    mat = tmp_path / "G.mat"
    lam = tmp_path / "lam.csv"
    rc = run_cli("testgen", "--type", "3", "--n", "64", "--seed", "7",
                 "--out", str(mat), "--lambda", str(lam))
    assert rc == 0
    return mat, lam


class TestTestgen:
    def test_outputs_readable(self, problem):
        mat, lam = problem
        g, sig = matio.read_matrix(mat)
        assert g.shape == (64, 64)
        assert sig is not None and 0 < sig.n_plus < 64
        assert matio.read_lambda_csv(lam).shape == (64,)


class TestSvdRun:
    def test_report_and_determinism(self, problem, tmp_path):
        mat, lam = problem
        out1 = tmp_path / "r1.json"
        out2 = tmp_path / "r2.json"
        args = ["svd", "run", "--input", str(mat), "--variant", "bo",
                "--width", "16", "--accumulate-v", "--lambda", str(lam)]
        assert run_cli(*args, "--out", str(out1)) == 0
        assert run_cli(*args, "--out", str(out2)) == 0
        a = json.loads(out1.read_text())
        b = json.loads(out2.read_text())
        assert a["relative_error"] <= 1e-12
        assert a["converged"] is True
        assert a["sigma_digest"]["min"] > 0
        assert len(a["sigma"]) == 64
        a.pop("wall_time_s")
        b.pop("wall_time_s")
        assert a == b

    def test_nplus_override(self, problem, tmp_path):
        mat, _ = problem
        out = tmp_path / "r.json"
        rc = run_cli("svd", "run", "--input", str(mat), "--variant", "fb",
                     "--width", "16", "--nplus", "64", "--out", str(out))
        assert rc == 0
        assert json.loads(out.read_text())["config"]["n_plus"] == 64

    def test_missing_input_io_error(self, tmp_path, capsys):
        rc = run_cli("svd", "run", "--input", str(tmp_path / "nope.mat"),
                     "--variant", "fb")
        assert rc == 4

    def test_rank_deficient_numeric_error(self, tmp_path, capsys):
        mat = tmp_path / "sing.mat"
        g = np.zeros((32, 32), order="F")
        g[:, :] = np.eye(32)
        g[:, 1] = g[:, 0]  # exactly dependent columns
        matio.write_matrix(mat, g)
        rc = run_cli("svd", "run", "--input", str(mat), "--variant", "fb",
                     "--width", "16")
        assert rc == 3

    def test_unsafe_scaling_numeric_error(self, tmp_path, capsys):
        mat = tmp_path / "huge.mat"
        matio.write_matrix(mat, np.diag(np.full(32, 1e200)))
        rc = run_cli("svd", "run", "--input", str(mat), "--variant", "fb",
                     "--width", "16")
        assert rc == 3


class TestSvdDist:
    def test_dist_run_with_trace(self, problem, tmp_path):
        mat, lam = problem
        out = tmp_path / "d.json"
        trace = tmp_path / "t.csv"
        rc = run_cli("svd", "dist", "--input", str(mat), "--variant", "bo",
                     "--width", "16", "--workers", "2", "--lambda", str(lam),
                     "--out", str(out), "--trace", str(trace))
        assert rc == 0
        rep = json.loads(out.read_text())
        assert rep["workers"] == 2
        assert rep["relative_error"] <= 1e-12
        lines = trace.read_text().splitlines()
        assert lines[0] == "sweep,step,worker,column,dest,link"
        assert len(lines) > 1


class TestRotationSurvey:
    def test_csv_shape(self, capsys):
        rc = run_cli("rotation", "survey", "--kind", "trig",
                     "--samples", "256", "--seed", "1",
                     "--emin", "-2", "--emax", "2")
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "exponent,samples,mean_departure_cs1,mean_departure_cs2"
        assert len(lines) == 1 + 5 + 1  # header, five exponents, total row
        assert lines[-1].startswith("all,")


class TestBench:
    def test_csv_output(self, capsys):
        rc = run_cli("bench", "--orders", "32", "--types", "2",
                     "--variants", "fb,bo", "--width", "16")
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("type,n,variant")
