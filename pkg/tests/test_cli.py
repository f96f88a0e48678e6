"""Command-line interface: config handling, emission formats, exit codes."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from twopatch.cli import main


@pytest.fixture
def runner():
    return CliRunner()


class TestConfigHandling:
    def test_unknown_config_key_fails_before_compute(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epsilon": 0.5, "mystery_knob": 3}))
        res = runner.invoke(main, ["threshold", "--config", str(cfg), "--out", str(tmp_path / "o.csv")])
        assert res.exit_code == 2
        assert "mystery_knob" in res.output

    def test_config_fills_defaults_flags_win(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"m": 0.3, "t_value": 5.0, "points": 101}))
        out = tmp_path / "d.csv"
        res = runner.invoke(
            main, ["density", "--config", str(cfg), "--t", "0.4", "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        # flag overrode T; config supplied m: the support must be asinh(1/0.3)
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert abs(data[:, 0].max() - np.arcsinh(1.0 / 0.3)) < 0.02

    def test_malformed_config(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        res = runner.invoke(main, ["density", "--config", str(cfg), "--check"])
        assert res.exit_code == 2


class TestDeltaSurface:
    def test_single_point_grid(self, runner, tmp_path):
        out = tmp_path / "s.csv"
        res = runner.invoke(
            main,
            ["delta-surface", "--m-steps", "1", "--t-steps", "1", "--m-min", "0.2",
             "--m-max", "0.2", "--t-min", "3.0", "--t-max", "3.0", "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0] == "m,T,delta_closed,delta_spectral,delta_quadrature,max_discrepancy"
        assert len(lines) == 2

    def test_discrepancy_small_on_small_grid(self, runner, tmp_path):
        out = tmp_path / "s.csv"
        res = runner.invoke(
            main, ["delta-surface", "--m-steps", "4", "--t-steps", "4", "--out", str(out)]
        )
        assert res.exit_code == 0
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert np.max(data[:, 5]) < 1e-8

    def test_check_mode_writes_nothing(self, runner, tmp_path):
        res = runner.invoke(
            main, ["delta-surface", "--m-steps", "3", "--t-steps", "3", "--check"]
        )
        assert res.exit_code == 0
        assert "closed - spectral" in res.output
        assert not list(tmp_path.iterdir())

    def test_empty_grid_rejected(self, runner, tmp_path):
        res = runner.invoke(
            main, ["delta-surface", "--m-steps", "0", "--out", str(tmp_path / "s.csv")]
        )
        assert res.exit_code == 2

    def test_jobs_parallel_output_identical(self, runner, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["delta-surface", "--m-steps", "6", "--t-steps", "3"]
        assert runner.invoke(main, args + ["--out", str(a)]).exit_code == 0
        assert runner.invoke(main, args + ["--jobs", "3", "--out", str(b)]).exit_code == 0
        assert a.read_text() == b.read_text()


class TestThreshold:
    def test_rows_and_no_root_flag(self, runner, tmp_path):
        out = tmp_path / "t.csv"
        res = runner.invoke(
            main, ["threshold", "--t", "1", "--t", "20", "--t", "40", "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0] == "T,m_star,asymptote,ratio,status"
        assert lines[1].endswith("no_root")
        for line in lines[2:]:
            assert line.endswith("ok")
        row40 = lines[3].split(",")
        assert abs(np.log(float(row40[1])) / 40.0 + 0.5) < 0.05


class TestPdmpCommand:
    def test_jsonl_deterministic(self, runner, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        args = ["pdmp", "--horizon", "20000", "--seed", "7"]
        assert runner.invoke(main, args + ["--out", str(a)]).exit_code == 0
        assert runner.invoke(main, args + ["--out", str(b)]).exit_code == 0
        assert a.read_text() == b.read_text()
        recs = [json.loads(line) for line in a.read_text().splitlines()]
        assert [r["label"] for r in recs] == ["u_slope", "polar_lyapunov", "density_quadrature"]
        assert all(r.get("seed") == 7 for r in recs if r["method"] == "monte_carlo")

    def test_check_mode(self, runner):
        res = runner.invoke(main, ["pdmp", "--horizon", "20000", "--check"])
        assert res.exit_code == 0
        assert "quadrature" in res.output


class TestDensityCommand:
    def test_bounded_tail_closure(self, runner, tmp_path):
        out = tmp_path / "d.csv"
        res = runner.invoke(main, ["density", "--m", "0.2", "--t", "0.3", "--out", str(out)])
        assert res.exit_code == 0
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert out.read_text().splitlines()[0] == "v,rho_plus,rho_minus,rho"
        assert abs(np.trapezoid(data[:, 3], data[:, 0]) - 1.0) < 1e-6
        assert np.allclose(data[:, 1] + data[:, 2], data[:, 3])

    def test_singular_tail_closure_at_double_precision_floor(self, runner, tmp_path):
        # the endpoint-singular law keeps ~1e-4 of its mass within one ulp of
        # the endpoints, which no pointwise v-grid can expose; the export
        # closes to that floor
        out = tmp_path / "d.csv"
        res = runner.invoke(main, ["density", "--m", "0.2", "--t", "2.5", "--out", str(out)])
        assert res.exit_code == 0
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert abs(np.trapezoid(data[:, 3], data[:, 0]) - 1.0) < 2e-3


class TestSapeCommand:
    def test_jsonl_embeds_closed_form(self, runner, tmp_path):
        out = tmp_path / "s.jsonl"
        res = runner.invoke(
            main,
            ["sape", "--eta", "0.0", "--eta", "0.2", "--horizon", "4000", "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        recs = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(recs) == 2
        assert abs(recs[0]["value"] - recs[0]["closed_form"]) < 1e-6


class TestPersistenceCommand:
    def test_csv_shape(self, runner, tmp_path):
        out = tmp_path / "p.csv"
        res = runner.invoke(
            main,
            ["persistence", "--m-points", "4", "--periods", "30", "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0] == "m,verdict,delta_sign"
        assert len(lines) == 5

    def test_numerical_failure_exit_code(self, runner, tmp_path):
        res = runner.invoke(
            main,
            ["persistence", "--m-points", "3", "--periods", "5", "--dt", "5.0",
             "--out", str(tmp_path / "p.csv")],
        )
        assert res.exit_code == 3


class TestSirCommand:
    def test_smoke_outputs(self, runner, tmp_path):
        out = tmp_path / "sir.csv"
        res = runner.invoke(
            main,
            ["sir", "--m-points", "3", "--horizon-days", "120", "--dt", "0.2",
             "--out", str(out)],
        )
        assert res.exit_code == 0, res.output
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert out.read_text().splitlines()[0] == "m,cumulative_cases"
        assert np.all(np.isfinite(data[:, 1])) and np.all(data[:, 1] > 0.0)
        traj = (tmp_path / "sir.csv.traj.csv").read_text().splitlines()
        assert traj[0] == "t,S1,I1,S2,I2"

    def test_check_mode(self, runner):
        res = runner.invoke(main, ["sir", "--check"])
        assert res.exit_code == 0
        assert "conservation" in res.output


class TestOrbitCommand:
    def test_orbit_csv(self, runner, tmp_path):
        out = tmp_path / "o.csv"
        res = runner.invoke(
            main, ["orbit", "--m", "0.2", "--t", "2.0", "--points", "21", "--out", str(out)]
        )
        assert res.exit_code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,V,u"
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        # one full period: rises for T, falls for T, mirror-symmetric extremes
        assert abs(data[:, 1].max() + data[:, 1].min()) < 1e-9

    def test_orbit_check(self, runner):
        res = runner.invoke(main, ["orbit", "--check"])
        assert res.exit_code == 0
        assert "fixed point" in res.output

    def test_missing_out_is_a_usage_error(self, runner):
        res = runner.invoke(main, ["orbit"])
        assert res.exit_code == 2
