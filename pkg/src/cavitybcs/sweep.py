"""Parameter-grid sweeps: config parsing, scheduling, deterministic output and resume.

A sweep evaluates one engine (``lax``, ``trajectory`` or ``cavity``) on a
1-d or 2-d grid over the controls ``angle``, ``w_over_chin`` and
``eps0_over_chin``.  The output directory holds

* ``grid.csv``      one row per cell, fixed columns per engine (see ``COLUMNS``)
* ``manifest.json`` spec, tolerances, code version, progress and wall time
* ``cells.jsonl``   append-only sink of finished cells, used for resume

Every cell (or Lax continuation row) is computed from the sweep definition alone with a
seed derived from ``(seed, unit index)``, so the CSV is byte-identical for
any worker count and after a resume.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .lax import IMAG_TOL, N_RANDOM_SEEDS, SUBPHASE_TOL, classify_from_roots, find_roots_numeric, scan_roots_w
from .observables import Thresholds

SCHEMA_VERSION = 1
WORKERS_ENV = "CAVITYBCS_WORKERS"
PARAMETERS = ("angle", "w_over_chin", "eps0_over_chin")
ENGINES = ("lax", "trajectory", "cavity")

_BASE_COLUMNS = ["cell", "i", "j", "angle", "w_over_chin", "eps0_over_chin", "status", "reason"]
COLUMNS = {
    "lax": _BASE_COLUMNS + ["phase", "n_pairs", "r_plus", "r_minus", "r_ratio", "roots"],
    "trajectory": _BASE_COLUMNS + ["phase", "mean_abs_delta", "oscillation", "amplitude",
                                   "min_abs_delta", "max_abs_delta", "omega_osc", "jz_max"],
    "cavity": _BASE_COLUMNS + ["n_robust_peaks", "n_peaks", "f1", "h1", "f2", "h2", "second_ratio"],
}


class ConfigError(ValueError):
    """Invalid sweep configuration; ``path`` points at the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ------------------------------------------------------------------ spec types

@dataclass(frozen=True)
class Axis:
    name: str
    start: float
    stop: float
    points: int
    spacing: str = "linear"

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.start, self.stop, self.points)
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class LaxOptions:
    n_random: int = N_RANDOM_SEEDS
    imag_tol: float = IMAG_TOL
    subphase_tol: float = SUBPHASE_TOL


@dataclass(frozen=True)
class TrajectoryOptions:
    n_per_ensemble: int = 200
    t_max: float = 200.0
    n_samples: int = 2000
    rel_tol: float = 1e-7
    abs_tol: float = 1e-9
    method: str = "DOP853"
    splitting_kind: str = "equally_spaced"
    sign_convention: str = "attractive"
    thresholds: Thresholds = Thresholds()


@dataclass(frozen=True)
class CavityOptions:
    n_sim: int = 500
    t_max: float = 200.0
    n_samples: int = 2000
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    method: str = "DOP853"
    layout: str = "blocked"
    shuffle_seed: Optional[int] = 0
    rel_prominence: float = 0.1
    dominance: float = 3.0


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple
    engine: str = "lax"
    fixed: dict = field(default_factory=dict)
    family: str = "azimuthal"
    seed: int = 0
    output: str = "sweep_out"
    workers: Optional[int] = None
    lax: LaxOptions = LaxOptions()
    trajectory: TrajectoryOptions = TrajectoryOptions()
    cavity: CavityOptions = CavityOptions()

    def __post_init__(self):
        validate_spec(self)

    @property
    def shape(self) -> tuple:
        return tuple(a.points for a in self.axes)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["axes"] = [asdict(a) for a in self.axes]
        return {"schema_version": SCHEMA_VERSION, **d}

    def content_hash(self) -> str:
        """Hash of everything that affects cell values (not output path or workers)."""
        d = self.to_dict()
        d.pop("output")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def validate_spec(spec: SweepSpec) -> None:
    if spec.engine not in ENGINES:
        raise ConfigError("$.engine", f"unknown engine {spec.engine!r}; choose from {list(ENGINES)}")
    if not 1 <= len(spec.axes) <= 2:
        raise ConfigError("$.axes", "a sweep needs one or two axes")
    names = [a.name for a in spec.axes]
    if len(set(names)) != len(names):
        raise ConfigError("$.axes", "axis names must be distinct")
    for k, a in enumerate(spec.axes):
        path = f"$.axes[{k}]"
        if a.name not in PARAMETERS:
            raise ConfigError(f"{path}.name", f"unknown parameter {a.name!r}; choose from {list(PARAMETERS)}")
        if int(a.points) < 2:
            raise ConfigError(f"{path}.points", "need at least 2 points")
        if a.spacing not in ("linear", "log"):
            raise ConfigError(f"{path}.spacing", "spacing must be 'linear' or 'log'")
        if a.spacing == "log" and not (a.start > 0 and a.stop > 0):
            raise ConfigError(f"{path}.start", "log spacing needs positive bounds")
    for key in spec.fixed:
        if key not in PARAMETERS:
            raise ConfigError(f"$.fixed.{key}", f"unknown parameter; choose from {list(PARAMETERS)}")
        if key in names:
            raise ConfigError(f"$.fixed.{key}", "parameter is also a sweep axis")
    for key in PARAMETERS:
        if key not in names and key not in spec.fixed:
            raise ConfigError(f"$.fixed.{key}", "missing value for a parameter that is not swept")
    if spec.family not in ("azimuthal", "elevation"):
        raise ConfigError("$.family", "family must be 'azimuthal' or 'elevation'")
    if spec.engine == "cavity" and spec.family != "azimuthal":
        raise ConfigError("$.family", "the cavity engine prepares the azimuthal family only")
    if spec.workers is not None and int(spec.workers) < 1:
        raise ConfigError("$.workers", "workers must be >= 1")


# --------------------------------------------------------------- JSON config

def _build(cls, data: Any, path: str):
    """Instantiate a dataclass from a dict, rejecting unknown keys with their path."""
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
        default = known[key].default
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, f"{path}.{key}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def spec_from_dict(data: dict) -> SweepSpec:
    if not isinstance(data, dict):
        raise ConfigError("$", "config must be a JSON object")
    data = dict(data)
    if "schema_version" not in data:
        raise ConfigError("$.schema_version", "missing")
    version = data.pop("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("$.schema_version", f"unsupported version {version!r}; expected {SCHEMA_VERSION}")
    allowed = {f.name for f in dataclasses.fields(SweepSpec)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"$.{key}", "unknown key")
    if "axes" not in data or not isinstance(data["axes"], list):
        raise ConfigError("$.axes", "expected a list of axis objects")
    axes = tuple(_build(Axis, a, f"$.axes[{k}]") for k, a in enumerate(data["axes"]))
    fixed = data.get("fixed", {})
    if not isinstance(fixed, dict):
        raise ConfigError("$.fixed", "expected an object")
    kwargs = {k: v for k, v in data.items() if k not in ("axes", "lax", "trajectory", "cavity")}
    kwargs["axes"] = axes
    kwargs["fixed"] = {k: float(v) for k, v in fixed.items()}
    for key, cls in (("lax", LaxOptions), ("trajectory", TrajectoryOptions), ("cavity", CavityOptions)):
        if key in data:
            kwargs[key] = _build(cls, data[key], f"$.{key}")
    return SweepSpec(**kwargs)


def load_config(path) -> SweepSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from exc
    return spec_from_dict(data)


def resolve_workers(requested: Optional[int] = None) -> int:
    """Explicit value, else ``$CAVITYBCS_WORKERS``, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"${WORKERS_ENV}", f"not an integer: {env!r}") from None
    return 1


# ------------------------------------------------------------------ grid cells

def cell_parameters(spec: SweepSpec, cell: int) -> dict:
    idx = np.unravel_index(cell, spec.shape)
    values = dict(spec.fixed)
    for a, k in zip(spec.axes, idx):
        values[a.name] = float(a.values()[k])
    i = int(idx[0])
    j = int(idx[1]) if len(idx) > 1 else 0
    return {"cell": int(cell), "i": i, "j": j, **{p: values[p] for p in PARAMETERS}}


def _unit_seed(spec: SweepSpec, unit: int) -> int:
    return int(np.random.SeedSequence([spec.seed, unit]).generate_state(1)[0])


def work_units(spec: SweepSpec) -> list:
    """Cells grouped into scheduling units.

    Lax sweeps with a W axis run each line of constant other parameters as
    one unit so roots can be continued in increasing W; everything else is
    one cell per unit.
    """
    cells = np.arange(spec.n_cells).reshape(spec.shape)
    names = [a.name for a in spec.axes]
    if spec.engine == "lax" and "w_over_chin" in names:
        k = names.index("w_over_chin")
        order = np.argsort(spec.axes[k].values(), kind="stable")
        lines = np.moveaxis(cells, k, -1).reshape(-1, spec.axes[k].points)
        return [tuple(int(c) for c in line[order]) for line in lines]
    return [(int(c),) for c in cells.ravel()]


def _failure(base: dict, exc: Exception, engine: str) -> dict:
    out = dict(base, status="undetermined", reason=f"{type(exc).__name__}: {exc}")
    if "phase" in COLUMNS[engine]:
        out["phase"] = "undetermined"
    return out


def _lax_record(base: dict, roots, spec: SweepSpec) -> dict:
    label = classify_from_roots(roots, subphase_tol=spec.lax.subphase_tol)
    two = roots.n_pairs == 2
    return {
        **base, "status": "undetermined" if roots.undetermined else "ok", "reason": roots.reason,
        "phase": label.phase, "n_pairs": roots.n_pairs,
        "r_plus": roots.r_plus if two else None, "r_minus": roots.r_minus if two else None,
        "r_ratio": roots.r_ratio if two else None,
        "roots": ";".join(f"{z.real!r}{z.imag:+}j" for z in roots.roots),
    }


def _eval_lax(spec: SweepSpec, unit_index: int, unit: tuple) -> list:
    from .core import ModelParams

    bases = [cell_parameters(spec, c) for c in unit]
    seed = _unit_seed(spec, unit_index)
    opts = spec.lax
    if len(unit) > 1:
        first = bases[0]
        try:
            rows = scan_roots_w([b["w_over_chin"] for b in bases], first["eps0_over_chin"], spec.family,
                                first["angle"], n_random=opts.n_random, seed=seed, imag_tol=opts.imag_tol)
        except Exception as exc:  # noqa: BLE001 - recorded as an undetermined row
            return [_failure(b, exc, "lax") for b in bases]
        return [_lax_record(b, r, spec) for b, r in zip(bases, rows)]
    b = bases[0]
    try:
        params = ModelParams(chi=1.0, n_per_ensemble=1, eps0=b["eps0_over_chin"], w=b["w_over_chin"])
        roots = find_roots_numeric(params, spec.family, b["angle"], n_random=opts.n_random,
                                   rng=np.random.default_rng(seed), imag_tol=opts.imag_tol)
    except Exception as exc:  # noqa: BLE001
        return [_failure(b, exc, "lax")]
    return [_lax_record(b, roots, spec)]


def _eval_trajectory(spec: SweepSpec, unit_index: int, unit: tuple) -> list:
    from .core import InitialStateSpec, ModelParams, SplittingSpec, prepare_initial_state, sample_splittings
    from .dynamics import EvolutionConfig, integrate
    from .observables import classify_trajectory, extract_omega_osc

    b = cell_parameters(spec, unit[0])
    o = spec.trajectory
    try:
        params = ModelParams.dimensionless(b["w_over_chin"], b["eps0_over_chin"], o.n_per_ensemble,
                                           sign_convention=o.sign_convention)
        eps = sample_splittings(SplittingSpec.from_params(params, kind=o.splitting_kind,
                                                          seed=_unit_seed(spec, unit_index)))
        state = prepare_initial_state(InitialStateSpec(spec.family, b["angle"]), eps)
        config = EvolutionConfig(t_max=o.t_max, n_samples=o.n_samples, rel_tol=o.rel_tol,
                                 abs_tol=o.abs_tol, method=o.method)
        traj = integrate(state, params, config)
        traj.meta.update(angle=b["angle"], chi_n=params.chi_n, family=spec.family)
        label = classify_trajectory(traj, o.thresholds)
        omega = extract_omega_osc(traj)
    except Exception as exc:  # noqa: BLE001
        return [_failure(b, exc, "trajectory")]
    d = label.detail
    return [{
        **b, "status": "ok", "reason": "", "phase": label.phase,
        "mean_abs_delta": d["mean_abs_delta"], "oscillation": d["oscillation"], "amplitude": d["amplitude"],
        "min_abs_delta": d["min_abs_delta"], "max_abs_delta": d["max_abs_delta"],
        "omega_osc": omega, "jz_max": float(np.max(np.abs(traj.jz))),
    }]


def _eval_cavity(spec: SweepSpec, unit_index: int, unit: tuple) -> list:
    from .cavity import CavityParams, run_cavity_experiment
    from .dynamics import EvolutionConfig
    from .observables import count_robust_peaks, field_spectrum

    b = cell_parameters(spec, unit[0])
    o = spec.cavity
    try:
        cav = CavityParams(n_sim=o.n_sim, layout=o.layout, shuffle_seed=o.shuffle_seed)
        config = EvolutionConfig(t_max=o.t_max, n_samples=o.n_samples, rel_tol=o.rel_tol,
                                 abs_tol=o.abs_tol, method=o.method)
        traj = run_cavity_experiment(b["angle"], b["eps0_over_chin"] * cav.chi_n,
                                     b["w_over_chin"] * cav.chi_n, cav, config)
        result = field_spectrum(traj, rel_prominence=o.rel_prominence)
        robust = count_robust_peaks(result, dominance=o.dominance)
    except Exception as exc:  # noqa: BLE001
        return [_failure(b, exc, "cavity")]
    peaks = result.peaks
    f1 = peaks[0].frequency / cav.chi_n if peaks else None
    h1 = peaks[0].height if peaks else None
    f2 = peaks[1].frequency / cav.chi_n if len(peaks) > 1 else None
    h2 = peaks[1].height if len(peaks) > 1 else None
    return [{
        **b, "status": "ok", "reason": "", "n_robust_peaks": robust, "n_peaks": len(peaks),
        "f1": f1, "h1": h1, "f2": f2, "h2": h2,
        "second_ratio": (h2 / h1) if (h1 and h2 is not None) else None,
    }]


_EVALUATORS = {"lax": _eval_lax, "trajectory": _eval_trajectory, "cavity": _eval_cavity}


def evaluate_units(spec: SweepSpec, units: list) -> list:
    """Evaluate ``[(unit_index, cells), ...]`` in order; used by the worker processes."""
    fn = _EVALUATORS[spec.engine]
    out = []
    for index, cells in units:
        out.extend(fn(spec, index, cells))
    return out


# ------------------------------------------------------------------ run + I/O

def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_grid_csv(path, records: list, engine: str) -> None:
    cols = COLUMNS[engine]
    lines = [",".join(cols)]
    for rec in sorted(records, key=lambda r: r["cell"]):
        fields = []
        for c in cols:
            text = _format(rec.get(c))
            if "," in text or '"' in text:
                text = '"' + text.replace('"', '""') + '"'
            fields.append(text)
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_csv(path) -> list:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _load_sink(path: Path) -> dict:
    done = {}
    if not path.exists():
        return done
    for line in path.read_text().splitlines():
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            break  # torn final line from an interrupted write
        done[rec["cell"]] = rec
    return done


def _manifest(spec: SweepSpec, status: str, n_done: int, started: float, wall: float,
              workers: int, undetermined: int) -> dict:
    import scipy

    return {
        "schema_version": SCHEMA_VERSION,
        "status": status,
        "spec": spec.to_dict(),
        "spec_hash": spec.content_hash(),
        "engine": spec.engine,
        "tolerances": asdict(getattr(spec, spec.engine)),
        "columns": COLUMNS[spec.engine],
        "n_cells": spec.n_cells,
        "n_completed": n_done,
        "n_undetermined": undetermined,
        "workers": workers,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_time_s": wall,
        "files": {"grid": "grid.csv", "sink": "cells.jsonl"},
    }


def _blocks(items: list, n_blocks: int) -> list:
    """Static contiguous partition of ``items`` into at most ``n_blocks`` blocks."""
    n_blocks = max(1, min(n_blocks, len(items)))
    bounds = np.linspace(0, len(items), n_blocks + 1).round().astype(int)
    return [items[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def run_sweep(spec: SweepSpec, output: Optional[str] = None, workers: Optional[int] = None,
              resume: bool = True, max_units: Optional[int] = None) -> Path:
    """Evaluate the grid and write ``grid.csv`` + ``manifest.json`` into the output directory.

    With ``resume`` an existing sink for the same sweep is reused and only
    missing cells are computed; a sink from a different sweep is an error.
    ``max_units`` stops after that many newly computed units (an
    interruption, used to exercise resume); the manifest then says
    ``"partial"`` and no grid is written.
    """
    out = Path(output or spec.output)
    out.mkdir(parents=True, exist_ok=True)
    n_workers = resolve_workers(workers if workers is not None else spec.workers)
    sink_path, manifest_path = out / "cells.jsonl", out / "manifest.json"

    done: dict = {}
    if manifest_path.exists() and resume:
        old = json.loads(manifest_path.read_text())
        if old.get("spec_hash") != spec.content_hash():
            raise ConfigError("$", f"{out} holds results of a different sweep; use a new output or disable resume")
        done = _load_sink(sink_path)
    else:
        sink_path.write_text("")
    # rewrite the sink without any torn line so appends stay parseable
    sink_path.write_text("".join(json.dumps(done[c]) + "\n" for c in sorted(done)))

    started = time.time()
    manifest_path.write_text(json.dumps(_manifest(spec, "running", len(done), started, 0.0, n_workers, 0), indent=2))

    units = [(k, u) for k, u in enumerate(work_units(spec)) if not all(c in done for c in u)]
    if max_units is not None:
        units = units[:max_units]

    def sink(records):
        with open(sink_path, "a") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
                done[rec["cell"]] = rec

    if n_workers == 1 or len(units) <= 1:
        for unit in units:
            sink(evaluate_units(spec, [unit]))
    else:
        blocks = _blocks(units, 4 * n_workers)
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for records in pool.map(evaluate_units, [spec] * len(blocks), blocks):
                sink(records)

    complete = len(done) == spec.n_cells
    undetermined = sum(1 for r in done.values() if r.get("status") != "ok")
    if complete:
        write_grid_csv(out / "grid.csv", list(done.values()), spec.engine)
    manifest_path.write_text(json.dumps(
        _manifest(spec, "complete" if complete else "partial", len(done), started,
                  time.time() - started, n_workers, undetermined), indent=2))
    return out


def example_config(engine: str = "lax") -> dict:
    """A ready-to-edit config: the (angle, W) map at eps0 = 0.1 chi N, or a W sweep at dphi = pi for the cavity."""
    if engine == "cavity":
        return {"schema_version": SCHEMA_VERSION, "engine": "cavity",
                "axes": [{"name": "w_over_chin", "start": 0.25, "stop": 2.5, "points": 19}],
                "fixed": {"angle": math.pi, "eps0_over_chin": 0.1}, "output": "cavity_w_sweep"}
    return {"schema_version": SCHEMA_VERSION, "engine": engine,
            "axes": [{"name": "angle", "start": 0.0, "stop": math.pi, "points": 40},
                     {"name": "w_over_chin", "start": 0.1, "stop": 4.0, "points": 40}],
            "fixed": {"eps0_over_chin": 0.1}, "output": f"{engine}_phase_diagram"}
