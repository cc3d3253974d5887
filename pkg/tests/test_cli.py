import json

import numpy as np
import pytest
from click.testing import CliRunner

from loops_spmm import densify, loops_to_csr, parse_matrix_market, read_loops_file, write_matrix_market
from loops_spmm.cli import main
from loops_spmm import random_sparse

SCHEDULE_KEYS = {"a0", "a1", "a2", "a3", "a4", "t_neon", "t_sme", "r_boundary", "svl_bits", "precision"}


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def tiny_mtx(tmp_path):
    path = tmp_path / "tiny.mtx"
    path.write_text(
        "%%MatrixMarket matrix coordinate real general\n"
        "4 4 5\n"
        "1 1 2.0\n1 3 -1.5\n2 2 4.0\n3 1 1.0\n4 4 0.25\n"
    )
    return str(path)


@pytest.fixture
def random_mtx(tmp_path):
    path = tmp_path / "rand.mtx"
    with open(path, "w") as fh:
        write_matrix_market(random_sparse(48, 40, 0.1, seed=17), fh)
    return str(path)


@pytest.fixture
def identity_mtx(tmp_path):
    path = tmp_path / "eye.mtx"
    body = "".join(f"{i} {i} 1.0\n" for i in range(1, 9))
    path.write_text("%%MatrixMarket matrix coordinate real general\n8 8 8\n" + body)
    return str(path)


class TestConvert:
    def test_explicit_boundary_round_trips(self, runner, tiny_mtx, tmp_path):
        out = str(tmp_path / "tiny.loops")
        result = runner.invoke(main, ["convert", tiny_mtx, "--r-boundary", "0", "--output", out])
        assert result.exit_code == 0, result.output
        cached = read_loops_file(out)
        original = parse_matrix_market(open(tiny_mtx).read())
        assert np.array_equal(densify(loops_to_csr(cached)), densify(original))

    def test_auto_writes_schedule_sidecar(self, runner, tiny_mtx, tmp_path):
        out = str(tmp_path / "tiny.loops")
        result = runner.invoke(
            main, ["convert", tiny_mtx, "--r-boundary", "auto", "--output", out, "--threads", "2"]
        )
        assert result.exit_code == 0, result.output
        sidecar = json.loads(open(out + ".schedule.json").read())
        assert set(sidecar) == SCHEDULE_KEYS

    def test_nonexistent_input_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["convert", str(tmp_path / "missing.mtx")])
        assert result.exit_code == 2
        assert "missing.mtx" in result.output

    def test_bad_boundary_exits_2(self, runner, tiny_mtx):
        result = runner.invoke(main, ["convert", tiny_mtx, "--r-boundary", "99"])
        assert result.exit_code == 2

    def test_malformed_file_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.mtx"
        bad.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n9 9 1.0\n")
        result = runner.invoke(main, ["convert", str(bad)])
        assert result.exit_code == 2
        assert "line 3" in result.output


class TestVerify:
    def test_identity_matrix_has_zero_error(self, runner, identity_mtx):
        result = runner.invoke(main, ["verify", identity_mtx])
        assert result.exit_code == 0, result.output
        for line in result.output.splitlines():
            if "max_rel_err" in line:
                assert "max_rel_err=0.000e+00" in line

    @pytest.mark.parametrize("precision", ["fp64", "fp32", "fp16"])
    def test_random_matrix_within_bounds(self, runner, random_mtx, precision):
        result = runner.invoke(main, ["verify", random_mtx, "--precision", precision])
        assert result.exit_code == 0, result.output
        assert "verification passed" in result.output

    def test_reports_one_line_per_configuration(self, runner, random_mtx):
        result = runner.invoke(main, ["verify", random_mtx, "--svl-bits", "128"])
        lines = [l for l in result.output.splitlines() if "max_rel_err" in l]
        assert len(lines) == 8  # 4 splits x 2 thread settings


class TestBench:
    def test_report_shape_and_accounting(self, runner, tiny_mtx):
        result = runner.invoke(main, ["bench", tiny_mtx, "--reps", "3", "--threads", "2"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert len(report["gflops_all"]) == 3
        assert report["n"] == 32  # default operand width
        flops = 2 * report["nnz"] * report["n"]
        assert report["gflops_median"] * report["exec_time_median"] * 1e9 == pytest.approx(
            flops, rel=1e-12
        )

    def test_csv_carries_same_numbers(self, runner, tiny_mtx, tmp_path):
        cache = str(tmp_path / "sched.json")
        json_run = runner.invoke(
            main, ["bench", tiny_mtx, "--reps", "2", "--threads", "2", "--schedule-cache", cache]
        )
        csv_run = runner.invoke(
            main,
            ["bench", tiny_mtx, "--reps", "2", "--threads", "2", "--schedule-cache", cache, "--out", "csv"],
        )
        assert csv_run.exit_code == 0, csv_run.output
        report = json.loads(json_run.output)
        header, row = csv_run.output.strip().splitlines()
        csv_doc = dict(zip(header.split(","), row.split(",")))
        # identical static fields; timing fields differ between runs by nature
        for key in ("matrix_id", "precision", "nnz", "n", "t_neon", "t_sme", "r_boundary"):
            assert str(report[key]) == csv_doc[key]

    def test_decision_within_budget(self, runner, random_mtx):
        result = runner.invoke(main, ["bench", random_mtx, "--reps", "2", "--threads", "3"])
        report = json.loads(result.output)
        assert report["t_neon"] + report["t_sme"] <= 3


class TestCalibrateCmd:
    def test_schema(self, runner, tiny_mtx):
        result = runner.invoke(main, ["calibrate", tiny_mtx, "--threads", "2"])
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        assert set(doc) == SCHEDULE_KEYS
        assert doc["t_neon"] + doc["t_sme"] <= 2

    def test_cache_skips_recalibration(self, runner, tiny_mtx, tmp_path):
        cache = str(tmp_path / "sched.json")
        first = runner.invoke(main, ["calibrate", tiny_mtx, "--threads", "2", "--schedule-cache", cache])
        assert first.exit_code == 0
        # Plant a sentinel decision: a rerun that honors the cache must echo it.
        doc = json.loads(open(cache).read())
        doc["r_boundary"] = 3
        doc["t_neon"], doc["t_sme"] = 1, 1
        json.dump(doc, open(cache, "w"))
        second = runner.invoke(main, ["calibrate", tiny_mtx, "--threads", "2", "--schedule-cache", cache])
        assert second.exit_code == 0
        assert json.loads(second.output)["r_boundary"] == 3
