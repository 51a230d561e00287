"""End-to-end command-line behavior: exit codes, files, determinism."""

import json

import numpy as np
import pytest

from nrc_lab import UFMConfig, compute_target_stats, load_matrix, optimal_loss
from nrc_lab.cli import main


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def stdout_value(out, key):
    for line in out.splitlines():
        if line.startswith(key + "="):
            return float(line.split("=", 1)[1])
    raise AssertionError(f"{key}= not found in output:\n{out}")


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    code = main(
        ["gen", "--n", "2", "--d-in", "8", "--m", "64",
         "--sigma", "diag:2,1", "--seed", "3", "-o", str(out)]
    )
    assert code == 0
    return out


@pytest.fixture(scope="module")
def solved_dir(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("solved")
    code = main(
        ["solve", "--y", str(dataset_dir / "Y.csv"),
         "--lambda-h", "0.1", "--lambda-w", "0.1", "-o", str(out)]
    )
    assert code == 0
    return out


class TestGen:
    def test_outputs(self, dataset_dir):
        for name in ("X.csv", "Y.csv", "spec.json", "resolved_config.json"):
            assert (dataset_dir / name).exists()
        x = load_matrix(dataset_dir / "X.csv", layout="rows")
        y = load_matrix(dataset_dir / "Y.csv", layout="rows")
        assert x.shape == (64, 8)
        assert y.shape == (64, 2)
        spec = json.loads((dataset_dir / "spec.json").read_text())
        assert spec["layout"] == "rows"
        assert spec["target_covariance"] == [[2.0, 0.0], [0.0, 1.0]]

    def test_covariance_delivered(self, dataset_dir):
        from nrc_lab import TargetMatrix, oriented

        y = oriented(load_matrix(dataset_dir / "Y.csv", layout="rows"), "rows")
        stats = compute_target_stats(TargetMatrix(y))
        assert stats.covariance == pytest.approx(np.diag([2.0, 1.0]), abs=1e-9)

    def test_rerun_byte_identical(self, tmp_path, capsys):
        args = ["gen", "--n", "1", "--d-in", "4", "--m", "32",
                "--sigma", "iso:1.5", "--seed", "9"]
        code1, out1, _ = run_cli(capsys, *args, "-o", tmp_path / "a")
        code2, out2, _ = run_cli(capsys, *args, "-o", tmp_path / "b")
        assert code1 == code2 == 0
        for name in ("X.csv", "Y.csv", "spec.json", "resolved_config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_indefinite_sigma_rejected(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "gen", "--n", "2", "--d-in", "4", "--m", "16",
            "--sigma", "diag:2,-1", "-o", tmp_path / "x",
        )
        assert code == 2
        assert "NotPSD" in err

    def test_sigma_file_form(self, tmp_path, capsys):
        sigma_path = tmp_path / "sigma.csv"
        sigma_path.write_text("2,0.5\n0.5,1\n")
        code, _, _ = run_cli(
            capsys, "gen", "--n", "2", "--d-in", "4", "--m", "32",
            "--sigma", f"file:{sigma_path}", "-o", tmp_path / "d",
        )
        assert code == 0

    def test_missing_required_setting(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "gen", "--n", "2", "--d-in", "4", "--m", "16", "-o", tmp_path / "x"
        )
        assert code == 2
        assert "sigma" in err


class TestSolve:
    def test_printed_losses_match_library(self, dataset_dir, solved_dir, capsys):
        out = tmp_out = solved_dir  # files already produced by the fixture
        code, stdout, _ = run_cli(
            capsys, "solve", "--y", dataset_dir / "Y.csv",
            "--lambda-h", "0.1", "--lambda-w", "0.1", "-o", tmp_out,
        )
        assert code == 0
        from nrc_lab import TargetMatrix, oriented

        y = oriented(load_matrix(dataset_dir / "Y.csv", layout="rows"), "rows")
        stats = compute_target_stats(TargetMatrix(y))
        expected = optimal_loss(stats, UFMConfig(0.1, 0.1))
        assert stdout_value(stdout, "loss") == pytest.approx(expected, rel=1e-12)
        assert stdout_value(stdout, "optimal_loss") == pytest.approx(expected, rel=1e-12)
        assert stdout_value(stdout, "j_star") == 2

    def test_report_shows_collapse(self, solved_dir):
        report = json.loads((solved_dir / "report.json").read_text())
        assert report["nrc1"] <= 1e-9
        assert report["nrc2"] <= 1e-9
        assert report["nrc3"] <= 1e-9
        assert report["gamma_used"] == pytest.approx(0.01)
        assert report["gamma_source"] == "supplied"

    def test_solution_files(self, solved_dir):
        for name in ("W.csv", "H.csv", "b.csv", "meta.json"):
            assert (solved_dir / "solution" / name).exists()

    def test_degenerate_regime_announced(self, dataset_dir, tmp_path, capsys):
        code, stdout, _ = run_cli(
            capsys, "solve", "--y", dataset_dir / "Y.csv",
            "--lambda-h", "4", "--lambda-w", "4", "-o", tmp_path / "deg",
        )
        assert code == 0
        assert "degenerate optimum (W,H,b)=(0,0,ybar)" in stdout
        assert stdout_value(stdout, "j_star") == 0
        report = json.loads((tmp_path / "deg" / "report.json").read_text())
        assert report["degenerate"] is True

    def test_zero_penalty_redirected(self, dataset_dir, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "solve", "--y", dataset_dir / "Y.csv",
            "--lambda-h", "0", "--lambda-w", "0.1", "-o", tmp_path / "x",
        )
        assert code == 2
        assert "UseNoRegularizationSolver" in err

    def test_rerun_byte_identical(self, dataset_dir, tmp_path, capsys):
        args = ["solve", "--y", dataset_dir / "Y.csv",
                "--lambda-h", "0.05", "--lambda-w", "0.2", "--rotation-seed", "6"]
        code1, out1, _ = run_cli(capsys, *args, "-o", tmp_path / "a")
        code2, out2, _ = run_cli(capsys, *args, "-o", tmp_path / "b")
        assert code1 == code2 == 0
        assert out1 == out2
        for rel in ("solution/W.csv", "solution/H.csv", "solution/b.csv",
                    "solution/meta.json", "report.json", "resolved_config.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


class TestTrainUfmCli:
    def test_descent_matches_solve(self, dataset_dir, tmp_path, capsys):
        code, stdout, _ = run_cli(
            capsys, "train", "ufm", "--y", dataset_dir / "Y.csv",
            "--lambda-h", "0.1", "--lambda-w", "0.1",
            "--lr", "0.25", "--steps", "40000", "--log-every", "10000",
            "--feature-dim", "8", "--seed", "1", "-o", tmp_path / "run",
        )
        assert code == 0
        from nrc_lab import TargetMatrix, oriented

        y = oriented(load_matrix(dataset_dir / "Y.csv", layout="rows"), "rows")
        stats = compute_target_stats(TargetMatrix(y))
        expected = optimal_loss(stats, UFMConfig(0.1, 0.1))
        assert stdout_value(stdout, "final_loss") == pytest.approx(expected, rel=1e-6)
        assert (tmp_path / "run" / "trace.csv").exists()
        for name in ("W.csv", "H.csv", "b.csv", "meta.json"):
            assert (tmp_path / "run" / "final_state" / name).exists()

    def test_trace_parses(self, dataset_dir, tmp_path, capsys):
        code, _, _ = run_cli(
            capsys, "train", "ufm", "--y", dataset_dir / "Y.csv",
            "--steps", "500", "--log-every", "100", "-o", tmp_path / "run",
        )
        assert code == 0
        trace = load_matrix(tmp_path / "run" / "trace.csv", header=True)
        assert trace.shape[0] == 6  # steps 0, 100, ..., 500
        assert list(trace[:, 0]) == [0, 100, 200, 300, 400, 500]


@pytest.mark.filterwarnings("ignore::nrc_lab.GammaOutOfRangeWarning")
class TestTrainMlpCli:
    def test_basic_run(self, dataset_dir, tmp_path, capsys):
        code, stdout, _ = run_cli(
            capsys, "train", "mlp",
            "--x", dataset_dir / "X.csv", "--y", dataset_dir / "Y.csv",
            "--hidden", "8", "--steps", "200", "--log-every", "100",
            "--lr", "0.05", "-o", tmp_path / "run",
        )
        assert code == 0
        assert np.isfinite(stdout_value(stdout, "final_loss"))
        assert np.isfinite(stdout_value(stdout, "final_r2"))
        assert (tmp_path / "run" / "trace.csv").exists()
        assert (tmp_path / "run" / "final_state" / "arch.json").exists()

    def test_holdout_reported(self, dataset_dir, tmp_path, capsys):
        code, stdout, _ = run_cli(
            capsys, "train", "mlp",
            "--x", dataset_dir / "X.csv", "--y", dataset_dir / "Y.csv",
            "--hidden", "8", "--steps", "100", "--log-every", "100",
            "--holdout", "0.25", "-o", tmp_path / "run",
        )
        assert code == 0
        assert np.isfinite(stdout_value(stdout, "holdout_mse"))
        assert np.isfinite(stdout_value(stdout, "holdout_r2"))

    def test_holdout_range_enforced(self, dataset_dir, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "train", "mlp",
            "--x", dataset_dir / "X.csv", "--y", dataset_dir / "Y.csv",
            "--holdout", "0.6", "-o", tmp_path / "run",
        )
        assert code == 2
        assert "holdout" in err

    def test_penalty_mode_needs_both_lambdas(self, dataset_dir, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "train", "mlp",
            "--x", dataset_dir / "X.csv", "--y", dataset_dir / "Y.csv",
            "--lambda-h", "0.01", "-o", tmp_path / "run",
        )
        assert code == 2
        assert "lambda" in err

    def test_penalty_mode_runs(self, dataset_dir, tmp_path, capsys):
        code, stdout, _ = run_cli(
            capsys, "train", "mlp",
            "--x", dataset_dir / "X.csv", "--y", dataset_dir / "Y.csv",
            "--hidden", "8", "--steps", "100", "--log-every", "100",
            "--lambda-h", "0.001", "--lambda-w", "0.001",
            "--no-penultimate-relu", "-o", tmp_path / "run",
        )
        assert code == 0
        trace = load_matrix(
            tmp_path / "run" / "trace.csv", header=True, allow_non_finite=True
        )
        assert np.all(np.isfinite(trace[:, 8]))  # whiteness defined in this mode


class TestMetricsCli:
    def test_closed_form_collapse_via_files(self, dataset_dir, solved_dir, tmp_path, capsys):
        sol = solved_dir / "solution"
        code, stdout, _ = run_cli(
            capsys, "metrics",
            "--h", sol / "H.csv", "--w", sol / "W.csv", "--b", sol / "b.csv",
            "--y", dataset_dir / "Y.csv",
            "--gamma", "exact-c", "--lambda-h", "0.1", "--lambda-w", "0.1",
            "-o", tmp_path / "rep",
        )
        assert code == 0
        report = json.loads(stdout)
        assert report["nrc1"] <= 1e-9
        assert report["nrc2"] <= 1e-9
        assert report["nrc3"] <= 1e-9
        assert report["residual_whiteness"] is not None
        assert json.loads((tmp_path / "rep" / "report.json").read_text()) == report

    def test_supplied_gamma(self, dataset_dir, solved_dir, capsys):
        sol = solved_dir / "solution"
        code, stdout, _ = run_cli(
            capsys, "metrics",
            "--h", sol / "H.csv", "--w", sol / "W.csv",
            "--y", dataset_dir / "Y.csv", "--gamma", "0.25",
        )
        assert code == 0
        report = json.loads(stdout)
        assert report["gamma_used"] == 0.25
        assert report["gamma_source"] == "supplied"

    def test_exact_c_needs_lambdas(self, dataset_dir, solved_dir, capsys):
        sol = solved_dir / "solution"
        code, _, err = run_cli(
            capsys, "metrics",
            "--h", sol / "H.csv", "--w", sol / "W.csv",
            "--y", dataset_dir / "Y.csv", "--gamma", "exact-c",
        )
        assert code == 2
        assert "exact-c" in err

    def test_shape_mismatch_rejected(self, dataset_dir, solved_dir, tmp_path, capsys):
        sol = solved_dir / "solution"
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3,4\n5,6\n")
        code, _, err = run_cli(
            capsys, "metrics",
            "--h", sol / "H.csv", "--w", bad, "--y", dataset_dir / "Y.csv",
        )
        assert code == 2
        assert "DimensionError" in err

    def test_csv_format_and_log(self, dataset_dir, solved_dir, tmp_path, capsys):
        sol = solved_dir / "solution"
        log = tmp_path / "log.csv"
        for step in (0, 100):
            code, stdout, _ = run_cli(
                capsys, "metrics",
                "--h", sol / "H.csv", "--w", sol / "W.csv",
                "--y", dataset_dir / "Y.csv",
                "--log", log, "--step", step, "--format", "csv",
            )
            assert code == 0
        assert stdout.startswith("step,nrc1,nrc2,nrc3,gamma,evr1")
        logged = load_matrix(log, header=True, allow_non_finite=True)
        assert logged.shape[0] == 2
        assert list(logged[:, 0]) == [0, 100]


class TestSweepCli:
    def test_closed_form_sweep(self, dataset_dir, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("NRC_LAB_THREADS", "2")
        code, stdout, _ = run_cli(
            capsys, "sweep", "--mode", "closed-form",
            "--grid", "0.01,0.04,0.09", "--seeds", "0,1",
            "--y", dataset_dir / "Y.csv", "-o", tmp_path / "sw",
        )
        assert code == 0
        text = (tmp_path / "sw" / "sweep.csv").read_text().strip().split("\n")
        assert text[0] == (
            "mode,grid_value,seed,step,loss,mse,r2,nrc1,nrc2,nrc3,gamma,whiteness,status"
        )
        rows = [line.split(",") for line in text[1:]]
        assert len(rows) == 6  # 3 grid values x 2 seeds
        assert all(row[0] == "closed-form" and row[-1] == "ok" for row in rows)
        # every admissible c collapses nrc3 at gamma = c
        for row in rows:
            assert float(row[9]) <= 1e-9
        assert (tmp_path / "sw" / "cells" / "cell_0000.csv").exists()

    def test_failed_cell_recorded(self, dataset_dir, tmp_path, capsys):
        code, _, _ = run_cli(
            capsys, "sweep", "--mode", "closed-form",
            "--grid", "0.01,-1", "--seeds", "0",
            "--y", dataset_dir / "Y.csv", "-o", tmp_path / "sw",
        )
        assert code == 0
        lines = (tmp_path / "sw" / "sweep.csv").read_text().strip().split("\n")
        statuses = [line.split(",")[-1] for line in lines[1:]]
        assert "ok" in statuses
        assert "failed:ValidationError" in statuses

    @pytest.mark.filterwarnings("ignore::nrc_lab.GammaOutOfRangeWarning")
    def test_mlp_sweep(self, dataset_dir, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("NRC_LAB_THREADS", "2")
        code, _, _ = run_cli(
            capsys, "sweep", "--mode", "mlp", "--grid", "0,0.01", "--seeds", "0",
            "--x", dataset_dir / "X.csv", "--y", dataset_dir / "Y.csv",
            "--hidden", "8", "--steps", "100", "--log-every", "50",
            "-o", tmp_path / "sw",
        )
        assert code == 0
        lines = (tmp_path / "sw" / "sweep.csv").read_text().strip().split("\n")
        assert len(lines) == 1 + 2 * 3  # two cells, steps 0/50/100 each

    def test_short_grid_rejected(self, dataset_dir, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "sweep", "--mode", "closed-form", "--grid", "0.01",
            "--seeds", "0", "--y", dataset_dir / "Y.csv", "-o", tmp_path / "sw",
        )
        assert code == 2
        assert "grid" in err

    def test_rerun_byte_identical(self, dataset_dir, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("NRC_LAB_THREADS", "3")
        args = ["sweep", "--mode", "closed-form", "--grid", "0.01,0.25",
                "--seeds", "0,1", "--y", dataset_dir / "Y.csv"]
        code1, _, _ = run_cli(capsys, *args, "-o", tmp_path / "a")
        code2, _, _ = run_cli(capsys, *args, "-o", tmp_path / "b")
        assert code1 == code2 == 0
        assert (tmp_path / "a" / "sweep.csv").read_bytes() == (
            tmp_path / "b" / "sweep.csv"
        ).read_bytes()


class TestConfigResolution:
    def test_flags_override_config_over_defaults(self, dataset_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"lambda_h": 0.3, "lambda_w": 0.3}))
        code, _, _ = run_cli(
            capsys, "solve", "--config", cfg, "--y", dataset_dir / "Y.csv",
            "--lambda-h", "0.5", "-o", tmp_path / "out",
        )
        assert code == 0
        resolved = json.loads((tmp_path / "out" / "resolved_config.json").read_text())
        assert resolved["lambda_h"] == 0.5  # flag wins
        assert resolved["lambda_w"] == 0.3  # config beats the 0.01 default
        assert resolved["layout"] == "rows"  # untouched default

    def test_unknown_field_rejected(self, dataset_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"lambda_x": 1.0}))
        code, _, err = run_cli(
            capsys, "solve", "--config", cfg, "--y", dataset_dir / "Y.csv",
            "-o", tmp_path / "out",
        )
        assert code == 2
        assert "unknown field 'lambda_x'" in err

    def test_malformed_json_located(self, dataset_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{oops")
        code, _, err = run_cli(
            capsys, "solve", "--config", cfg, "--y", dataset_dir / "Y.csv",
            "-o", tmp_path / "out",
        )
        assert code == 2
        assert "line 1" in err

    def test_missing_input_file(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "solve", "--y", tmp_path / "absent.csv", "-o", tmp_path / "out"
        )
        assert code == 2

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 2
