import json
import math
import subprocess
import sys

import pytest

from cavitybcs import cli
from cavitybcs.core import ModelParams
from cavitybcs.dynamics import IntegrationError
from cavitybcs.lax import LaxRootSet, analytic_roots_antipodal
from cavitybcs.sweep import SCHEMA_VERSION


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_no_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1


def test_unknown_flag_is_a_usage_error():
    proc = subprocess.run([sys.executable, "-m", "cavitybcs.cli", "lax", "--bogus"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "unrecognized arguments" in proc.stderr


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert "FAIL" not in out
    assert "checks passed" in out


def test_selftest_reports_failures(capsys, monkeypatch):
    monkeypatch.setattr(cli, "selftest_checks", lambda: [("broken", False, "x")])
    code, out, _ = run(capsys, "selftest")
    assert code == 2
    assert "FAIL  broken" in out


def test_lax_prints_antipodal_roots(capsys):
    code, out, _ = run(capsys, "lax", "--dphi", "3.14159", "--w-over-chiN", "0.5", "--eps0-over-chiN", "0.1")
    assert code == 0
    data = json.loads(out)
    assert data["phase"] == "IIIb"
    closed = analytic_roots_antipodal(ModelParams(1.0, 1, 0.1, 0.5)).roots
    found = [complex(*r) for r in data["roots"]]
    assert len(found) == 2
    for a, b in zip(found, closed):
        assert abs(a - b) < 1e-4


def test_lax_undetermined_is_a_numerical_failure(capsys, monkeypatch):
    import cavitybcs.lax

    monkeypatch.setattr(cavitybcs.lax, "find_roots_numeric",
                        lambda *a, **k: LaxRootSet(undetermined=True, reason="test"))
    code, out, _ = run(capsys, "lax")
    assert code == 2
    assert json.loads(out)["phase"] == "undetermined"


def test_evolve_writes_trajectory(tmp_path, capsys):
    path = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "evolve", "--n", "20", "--t-max", "100", "--samples", "500",
                       "--method", "DOP853", "--rel-tol", "1e-7", "--abs-tol", "1e-9", "--out", str(path))
    assert code == 0
    summary = json.loads(out)
    assert summary["phase"] in ("IIIa", "IIIb")
    assert path.read_text().startswith("t,re_delta,im_delta,abs_delta,jz,energy")


def test_evolve_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "n_per_ensemble": 10, "t_max": 5.0,
                               "n_samples": 50, "angle": 1.0}))
    code, out, _ = run(capsys, "evolve", "--config", str(cfg), "--dphi", "2.0")
    assert code == 0
    used = json.loads(out)["config"]
    assert used["n_per_ensemble"] == 10
    assert used["angle"] == 2.0


def test_evolve_rejects_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "t_maximum": 5.0}))
    code, _, err = run(capsys, "evolve", "--config", str(cfg))
    assert code == 1
    assert "$.t_maximum" in err
    cfg.write_text(json.dumps({"t_max": 5.0}))
    code, _, err = run(capsys, "evolve", "--config", str(cfg))
    assert code == 1
    assert "schema_version" in err


def test_evolve_bad_extension_is_usage_error(tmp_path, capsys):
    code, _, _ = run(capsys, "evolve", "--n", "4", "--t-max", "1", "--samples", "10",
                     "--out", str(tmp_path / "x.txt"))
    assert code == 1


def test_integration_failure_exit_code(capsys, monkeypatch):
    import cavitybcs.dynamics

    def boom(*a, **k):
        raise IntegrationError("step size underflow", 1.5)

    monkeypatch.setattr(cavitybcs.dynamics, "integrate", boom)
    code, _, err = run(capsys, "evolve", "--n", "4", "--t-max", "1")
    assert code == 2
    assert "t = 1.5" in err


def test_spectrum_of_saved_trajectory(tmp_path, capsys):
    traj = tmp_path / "t.json"
    run(capsys, "evolve", "--n", "50", "--t-max", "100", "--samples", "1000", "--method", "DOP853",
        "--out", str(traj))
    code, out, _ = run(capsys, "spectrum", str(traj), "--window", "50", "100", "--out", str(tmp_path / "s.csv"))
    assert code == 0
    assert json.loads(out)["peaks"]
    assert (tmp_path / "s.csv").read_text().startswith("omega,magnitude")
    code, _, _ = run(capsys, "spectrum", str(traj), "--signal", "field")
    assert code == 1
    code, _, _ = run(capsys, "spectrum", str(tmp_path / "missing.csv"))
    assert code == 1


def test_cavity_command(tmp_path, capsys):
    code, out, _ = run(capsys, "cavity", "--n-sim", "40", "--t-max", "100", "--samples", "800",
                       "--w-over-chiN", "0.3", "--out", str(tmp_path / "c.csv"))
    assert code == 0
    data = json.loads(out)
    assert data["adiabatic_ratio"] > 1
    assert "robust_peaks" in data
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header.endswith("re_a,im_a,abs_a_sq")


def test_phase_diagram_command(tmp_path, capsys, monkeypatch):
    code, out, _ = run(capsys, "phase-diagram", "--print-example", "--engine", "trajectory")
    assert code == 0
    assert json.loads(out)["engine"] == "trajectory"
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "engine": "lax",
                               "axes": [{"name": "w_over_chin", "start": 0.5, "stop": 3.5, "points": 3}],
                               "fixed": {"angle": math.pi, "eps0_over_chin": 0.1}}))
    monkeypatch.setenv("CAVITYBCS_WORKERS", "2")
    code, out, _ = run(capsys, "phase-diagram", "--config", str(cfg), "--out", str(tmp_path / "g"))
    assert code == 0
    assert out.startswith("complete: 3/3 cells")
    assert json.loads((tmp_path / "g" / "manifest.json").read_text())["workers"] == 2
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "engine": "lax", "axes": [], "mystery": 1}))
    code, _, err = run(capsys, "phase-diagram", "--config", str(cfg), "--out", str(tmp_path / "h"))
    assert code == 1
    assert "$.mystery" in err


def test_report_renders_figures(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "engine": "lax",
                               "axes": [{"name": "angle", "start": 0, "stop": math.pi, "points": 3},
                                        {"name": "w_over_chin", "start": 0.5, "stop": 3.5, "points": 3}],
                               "fixed": {"eps0_over_chin": 0.1}}))
    run(capsys, "phase-diagram", "--config", str(cfg), "--out", str(tmp_path / "g"))
    code, out, _ = run(capsys, "report", str(tmp_path / "g"))
    assert code == 0
    assert (tmp_path / "g" / "phase_map.png").stat().st_size > 0
    traj = tmp_path / "c.csv"
    run(capsys, "cavity", "--n-sim", "20", "--t-max", "20", "--samples", "200", "--out", str(traj))
    code, out, _ = run(capsys, "report", str(traj))
    assert code == 0
    for name in ("c_trajectory.png", "c_spectrum.png", "c_spectrum.csv"):
        assert (tmp_path / name).stat().st_size > 0
    code, _, _ = run(capsys, "report", str(tmp_path / "nothing"))
    assert code == 1


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "cavitybcs" in capsys.readouterr().out
