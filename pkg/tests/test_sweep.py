import json
import math

import pytest

from cavitybcs.sweep import (
    COLUMNS,
    SCHEMA_VERSION,
    WORKERS_ENV,
    ConfigError,
    example_config,
    load_config,
    read_grid_csv,
    resolve_workers,
    run_sweep,
    spec_from_dict,
    work_units,
)


def lax_config(**extra):
    cfg = {"schema_version": SCHEMA_VERSION, "engine": "lax",
           "axes": [{"name": "angle", "start": 0.0, "stop": math.pi, "points": 4},
                    {"name": "w_over_chin", "start": 0.1, "stop": 3.8, "points": 5}],
           "fixed": {"eps0_over_chin": 0.1}, "lax": {"n_random": 8}}
    cfg.update(extra)
    return cfg


def small_trajectory_config():
    return {"schema_version": SCHEMA_VERSION, "engine": "trajectory",
            "axes": [{"name": "w_over_chin", "start": -0.5, "stop": 3.5, "points": 3}],
            "fixed": {"angle": math.pi, "eps0_over_chin": 0.1},
            "trajectory": {"n_per_ensemble": 100, "t_max": 100, "n_samples": 400}}


# -- configuration -------------------------------------------------------------------------

@pytest.mark.parametrize("mutate, path", [
    (lambda c: c.pop("schema_version"), "$.schema_version"),
    (lambda c: c.update(schema_version=99), "$.schema_version"),
    (lambda c: c.update(colour="red"), "$.colour"),
    (lambda c: c["axes"][1].update(step=0.1), "$.axes[1].step"),
    (lambda c: c["axes"][0].update(name="temperature"), "$.axes[0].name"),
    (lambda c: c["axes"][0].update(points=1), "$.axes[0].points"),
    (lambda c: c["axes"][0].update(spacing="cubic"), "$.axes[0].spacing"),
    (lambda c: c["lax"].update(tolerance=1), "$.lax.tolerance"),
    (lambda c: c.update(trajectory={"thresholds": {"tol_x": 0.1}}), "$.trajectory.thresholds.tol_x"),
    (lambda c: c["fixed"].update(angle=0.3), "$.fixed.angle"),
    (lambda c: c.update(fixed={}), "$.fixed.eps0_over_chin"),
    (lambda c: c.update(engine="quantum"), "$.engine"),
    (lambda c: c.update(workers=0), "$.workers"),
])
def test_config_errors_name_the_offending_path(mutate, path):
    cfg = lax_config()
    mutate(cfg)
    with pytest.raises(ConfigError) as err:
        spec_from_dict(cfg)
    assert err.value.path == path
    assert str(err.value).startswith(path)


def test_config_round_trip(tmp_path):
    spec = spec_from_dict(lax_config())
    again = spec_from_dict(spec.to_dict())
    assert again == spec
    assert again.content_hash() == spec.content_hash()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert load_config(path) == spec
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("engine", ["lax", "trajectory", "cavity"])
def test_example_configs_are_valid(engine):
    spec = spec_from_dict(example_config(engine))
    assert spec.engine == engine


def test_hash_ignores_output_and_workers():
    a = spec_from_dict(lax_config(output="x", workers=1))
    b = spec_from_dict(lax_config(output="y", workers=3))
    c = spec_from_dict(lax_config(seed=5))
    assert a.content_hash() == b.content_hash() != c.content_hash()


def test_worker_resolution(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers() == 1
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv(WORKERS_ENV, "many")
    with pytest.raises(ConfigError):
        resolve_workers()


def test_lax_rows_are_continuation_units():
    spec = spec_from_dict(lax_config())
    units = work_units(spec)
    assert len(units) == 4
    assert all(len(u) == 5 for u in units)
    assert sorted(c for u in units for c in u) == list(range(20))


# -- running ----------------------------------------------------------------------------------

def test_lax_sweep_outputs(tmp_path):
    out = run_sweep(spec_from_dict(lax_config()), tmp_path / "a", workers=1)
    rows = read_grid_csv(out / "grid.csv")
    assert len(rows) == 20
    assert list(rows[0]) == COLUMNS["lax"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    phases = {(int(r["i"]), int(r["j"])): r["phase"] for r in rows}
    assert phases[(0, 0)] == "IIIa"      # aligned, narrow band
    assert phases[(0, 2)] == "II"        # aligned, moderate width
    assert phases[(3, 4)] == "I"         # antipodal, W > pi chi N
    assert phases[(3, 0)] == "IIIb"      # antipodal, narrow band


def test_output_is_independent_of_worker_count(tmp_path):
    spec = spec_from_dict(lax_config())
    one = run_sweep(spec, tmp_path / "one", workers=1)
    two = run_sweep(spec, tmp_path / "two", workers=2)
    assert (one / "grid.csv").read_bytes() == (two / "grid.csv").read_bytes()


def test_resume_after_interruption(tmp_path):
    spec = spec_from_dict(lax_config())
    full = run_sweep(spec, tmp_path / "full", workers=1)
    part = run_sweep(spec, tmp_path / "part", workers=1, max_units=2)
    assert json.loads((part / "manifest.json").read_text())["status"] == "partial"
    assert not (part / "grid.csv").exists()
    # a torn trailing line from a killed writer is tolerated
    with open(part / "cells.jsonl", "a") as fh:
        fh.write('{"cell": 3, "i"')
    run_sweep(spec, part, workers=2)
    assert (part / "grid.csv").read_bytes() == (full / "grid.csv").read_bytes()


def test_resume_refuses_a_different_sweep(tmp_path):
    run_sweep(spec_from_dict(lax_config()), tmp_path / "s", workers=1, max_units=1)
    with pytest.raises(ConfigError):
        run_sweep(spec_from_dict(lax_config(seed=9)), tmp_path / "s", workers=1)
    run_sweep(spec_from_dict(lax_config(seed=9)), tmp_path / "s", workers=1, resume=False)


def test_failed_cells_are_recorded(tmp_path):
    out = run_sweep(spec_from_dict(small_trajectory_config()), tmp_path / "t", workers=1)
    rows = read_grid_csv(out / "grid.csv")
    assert list(rows[0]) == COLUMNS["trajectory"]
    bad = rows[0]
    assert bad["status"] == "undetermined"
    assert bad["phase"] == "undetermined"
    assert "ValueError" in bad["reason"]
    assert rows[2]["status"] == "ok" and rows[2]["phase"] == "I"
    assert json.loads((out / "manifest.json").read_text())["n_undetermined"] == 1


def test_cavity_sweep(tmp_path):
    cfg = {"schema_version": SCHEMA_VERSION, "engine": "cavity",
           "axes": [{"name": "w_over_chin", "start": 0.25, "stop": 3.0, "points": 2}],
           "fixed": {"angle": math.pi, "eps0_over_chin": 0.1},
           "cavity": {"n_sim": 60, "t_max": 100, "n_samples": 800}}
    out = run_sweep(spec_from_dict(cfg), tmp_path / "c", workers=1)
    rows = read_grid_csv(out / "grid.csv")
    assert list(rows[0]) == COLUMNS["cavity"]
    assert all(r["status"] == "ok" for r in rows)
