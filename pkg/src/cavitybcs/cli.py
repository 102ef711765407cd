"""Command-line front door: ``cavitybcs <subcommand>``.

Subcommands: evolve, lax, phase-diagram, cavity, spectrum, selftest, report.
Values come from built-in defaults, then an optional JSON ``--config``
(with ``schema_version``), then command-line flags.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .sweep import SCHEMA_VERSION, ConfigError, _build

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------ run configs

@dataclass(frozen=True)
class EvolveConfig:
    angle: float = math.pi
    w_over_chin: float = 0.5
    eps0_over_chin: float = 0.1
    family: str = "azimuthal"
    n_per_ensemble: int = 500
    t_max: float = 200.0
    n_samples: int = 4096
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    method: str = "RK45"
    gamma: float = 0.0
    sign_convention: str = "attractive"
    splitting_kind: str = "equally_spaced"
    seed: Optional[int] = None
    output: Optional[str] = None


@dataclass(frozen=True)
class CavityRunConfig:
    angle: float = math.pi
    w_over_chin: float = 0.5
    eps0_over_chin: float = 0.1
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
    output: Optional[str] = None


def _load_run_config(cls, path: Optional[str], overrides: dict):
    """Defaults, then the JSON file, then non-None command-line values."""
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("$", f"cannot read {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("$", "config must be a JSON object")
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError("$.schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return _build(cls, data, "$")


def _add_point_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dphi", "--angle", dest="angle", type=float, help="opening angle (rad)")
    p.add_argument("--w-over-chiN", "--w-over-chin", dest="w_over_chin", type=float, help="W/(chi N)")
    p.add_argument("--eps0-over-chiN", "--eps0-over-chin", dest="eps0_over_chin", type=float, help="eps0/(chi N)")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--t-max", dest="t_max", type=float, help="duration in units of 1/(chi N)")
    p.add_argument("--samples", dest="n_samples", type=int, help="number of output samples")
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--method", choices=["RK45", "DOP853"])
    p.add_argument("--out", dest="output", help="trajectory file (.csv or .json)")


def _overrides(args, cls) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    return {k: v for k, v in vars(args).items() if k in names}


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# --------------------------------------------------------------- commands

def cmd_evolve(args) -> int:
    from .core import InitialStateSpec, ModelParams, SplittingSpec, prepare_initial_state, sample_splittings
    from .dynamics import EvolutionConfig, integrate
    from .observables import trajectory_metrics

    cfg = _load_run_config(EvolveConfig, args.config, _overrides(args, EvolveConfig))
    params = ModelParams.dimensionless(cfg.w_over_chin, cfg.eps0_over_chin, cfg.n_per_ensemble,
                                       sign_convention=cfg.sign_convention)
    eps = sample_splittings(SplittingSpec.from_params(params, kind=cfg.splitting_kind, seed=cfg.seed))
    state = prepare_initial_state(InitialStateSpec(cfg.family, cfg.angle), eps, chi=params.chi)
    evo = EvolutionConfig(t_max=cfg.t_max, n_samples=cfg.n_samples, rel_tol=cfg.rel_tol,
                          abs_tol=cfg.abs_tol, gamma=cfg.gamma, method=cfg.method)
    traj = integrate(state, params, evo)
    traj.meta.update(angle=cfg.angle, chi_n=params.chi_n, family=cfg.family)
    if not np.all(np.isfinite(traj.delta)):
        raise NumericalFailure("non-finite pairing amplitude")
    if cfg.output:
        _save_trajectory(traj, cfg.output)
    summary = {"config": asdict(cfg), "final_abs_delta": float(traj.abs_delta[-1]),
               "energy_drift": float(np.ptp(traj.energy)), "max_norm_dev": float(traj.max_norm_dev.max())}
    if cfg.t_max >= 100:
        m = trajectory_metrics(traj)
        summary.update(phase=m.phase, amplitude=m.amplitude, mean_abs_delta=m.mean_abs_delta,
                       omega_osc=m.omega_osc, jz_max=m.jz_max)
    _print_json(summary)
    return EXIT_OK


def _save_trajectory(traj, path: str) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".json":
        traj.to_json(out)
    elif out.suffix == ".csv":
        traj.to_csv(out)
    else:
        raise UsageError(f"unsupported trajectory extension {out.suffix!r}; use .csv or .json")


def cmd_lax(args) -> int:
    from .core import ModelParams
    from .lax import (analytic_roots_antipodal, analytic_roots_smallEps, analytic_roots_smallW,
                      classify_from_roots, critical_splitting, find_roots_numeric)

    angle = math.pi if args.angle is None else args.angle
    w = 0.5 if args.w_over_chin is None else args.w_over_chin
    eps0 = 0.1 if args.eps0_over_chin is None else args.eps0_over_chin
    params = ModelParams(chi=1.0, n_per_ensemble=1, eps0=eps0, w=w)
    roots = find_roots_numeric(params, args.family, angle, n_random=args.n_random,
                               rng=np.random.default_rng(args.seed))
    label = classify_from_roots(roots, params, angle)
    out = {"angle": angle, "w_over_chin": w, "eps0_over_chin": eps0, "family": args.family,
           "phase": label.phase, "n_pairs": roots.n_pairs, "roots": list(roots.roots),
           "residuals": list(roots.residuals), "undetermined": roots.undetermined, "reason": roots.reason}
    if roots.n_pairs == 2:
        out.update(r_plus=roots.r_plus, r_minus=roots.r_minus, r_tilde=roots.r_tilde)
    closed = {}
    if args.family == "azimuthal" and abs(abs(angle) - math.pi) < 1e-4:
        closed["antipodal"] = list(analytic_roots_antipodal(params).roots)
    try:
        closed["small_w"] = list(analytic_roots_smallW(params, args.family, angle).roots)
    except ValueError:
        pass
    closed["small_eps0"] = list(analytic_roots_smallEps(params, args.family, angle).roots)
    out["closed_forms"] = closed
    out["critical_splitting"] = critical_splitting(1.0, angle)
    _print_json(out)
    return EXIT_NUMERIC if roots.undetermined else EXIT_OK


def cmd_phase_diagram(args) -> int:
    from .sweep import example_config, load_config, run_sweep, spec_from_dict

    if args.print_example:
        _print_json(example_config(args.engine or "lax"))
        return EXIT_OK
    spec = load_config(args.config) if args.config else spec_from_dict(example_config(args.engine or "lax"))
    changes = {k: v for k, v in (("engine", args.engine), ("seed", args.seed)) if v is not None}
    if changes:
        spec = dataclasses.replace(spec, **changes)
    out = run_sweep(spec, output=args.output, workers=args.workers, resume=not args.no_resume)
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"{manifest['status']}: {manifest['n_completed']}/{manifest['n_cells']} cells "
          f"({manifest['n_undetermined']} undetermined) -> {out}")
    return EXIT_OK


def cmd_cavity(args) -> int:
    from .cavity import CavityParams, run_cavity_experiment
    from .dynamics import EvolutionConfig
    from .observables import count_robust_peaks, field_spectrum

    cfg = _load_run_config(CavityRunConfig, args.config, _overrides(args, CavityRunConfig))
    cav = CavityParams(n_sim=cfg.n_sim, layout=cfg.layout, shuffle_seed=cfg.shuffle_seed)
    evo = EvolutionConfig(t_max=cfg.t_max, n_samples=cfg.n_samples, rel_tol=cfg.rel_tol,
                          abs_tol=cfg.abs_tol, method=cfg.method)
    traj = run_cavity_experiment(cfg.angle, cfg.eps0_over_chin * cav.chi_n, cfg.w_over_chin * cav.chi_n, cav, evo)
    if cfg.output:
        _save_trajectory(traj, cfg.output)
    res = field_spectrum(traj, rel_prominence=cfg.rel_prominence)
    _print_json({
        "config": asdict(cfg), "chi_n_si": cav.chi_n, "adiabatic_ratio": cav.adiabatic_ratio,
        "robust_peaks": count_robust_peaks(res, dominance=cfg.dominance),
        "peaks": [{"omega_over_chin": p.frequency / cav.chi_n, "height": p.height} for p in res.peaks],
    })
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .dynamics import Trajectory
    from .observables import spectrum

    traj = Trajectory.load(args.trajectory)
    t = traj.times
    mask = np.ones(t.size, dtype=bool) if args.window is None else (t >= args.window[0]) & (t <= args.window[1])
    if args.signal == "abs_delta":
        series = traj.abs_delta
    elif args.signal == "delta":
        series = traj.delta
    elif args.signal == "field":
        if "re_a" not in traj.extras:
            raise UsageError("trajectory has no intracavity field columns")
        series = np.asarray(traj.extras["re_a"]) + 1j * np.asarray(traj.extras["im_a"])
    else:
        if args.signal not in traj.extras:
            raise UsageError(f"trajectory has no column {args.signal!r}")
        series = np.asarray(traj.extras[args.signal])
    res = spectrum(series[mask], traj.dt, rel_prominence=args.rel_prominence)
    if args.out:
        lines = ["omega,magnitude"] + [f"{f!r},{m!r}" for f, m in zip(res.frequencies, res.magnitudes)]
        Path(args.out).write_text("\n".join(lines) + "\n")
    _print_json({"signal": args.signal, "n": int(mask.sum()),
                 "peaks": [asdict(p) for p in res.peaks]})
    return EXIT_OK


def selftest_checks() -> list:
    """``(name, passed, detail)`` for the special-function and conservation suites."""
    from .core import InitialStateSpec, ModelParams, SplittingSpec, prepare_initial_state, sample_splittings
    from .dynamics import EvolutionConfig, integrate
    from .observables import parseval_ratio, spectrum
    from .special import complex_atanh, elliptic_K, jacobi_sn

    checks = []

    def check(name, value, target, tol):
        err = abs(value - target)
        checks.append((name, bool(err <= tol), f"|{value!r} - {target!r}| = {err:.2e} (tol {tol:g})"))

    check("K(0) = pi/2", elliptic_K(0.0), math.pi / 2, 1e-14)
    u = 0.7
    check("sn(u, 0) = sin u", float(jacobi_sn(u, 0.0)), math.sin(u), 1e-14)
    check("sn(u, 1) = tanh u", float(jacobi_sn(u, 1.0)), math.tanh(u), 1e-12)
    for m in (0.3, -2.0):
        check(f"sn(K, {m}) = 1", float(jacobi_sn(elliptic_K(m), m)), 1.0, 1e-12)
    check("atanh(0.5)", complex_atanh(0.5).real, math.atanh(0.5), 1e-15)
    x = np.sin(0.37 * np.arange(512)) + 0.3 * np.cos(1.1 * np.arange(512))
    check("Parseval", parseval_ratio(spectrum(x, 1.0)), 1.0, 1e-10)

    params = ModelParams.dimensionless(1.0, 0.1, 100)
    state = prepare_initial_state(InitialStateSpec("azimuthal", 1.0), sample_splittings(SplittingSpec.from_params(params)))
    probes = np.array([0.3 + 0.2j, -0.1 + 0.5j, 1.0j, 0.05 + 0.05j, -0.4 + 0.1j])
    traj = integrate(state, params, EvolutionConfig(t_max=100, n_samples=200), lax_probes=probes)
    e = traj.energy
    check("energy conserved", float(np.max(np.abs(e - e[0])) / abs(e[0])), 0.0, 1e-6)
    check("spin norms conserved", float(traj.max_norm_dev.max()), 0.0, 1e-6)
    q = traj.lax_q
    check("Lax norm conserved", float(np.max(np.abs(q - q[0]) / np.abs(q[0]))), 0.0, 1e-6)
    return checks


def cmd_selftest(args) -> int:
    checks = selftest_checks()
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    failed = sum(1 for _, ok, _ in checks if not ok)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def cmd_report(args) -> int:
    from . import plots
    from .dynamics import Trajectory
    from .observables import field_spectrum, spectrum
    from .sweep import read_grid_csv

    src = Path(args.source)
    written = []
    if src.is_dir():
        grid = src / "grid.csv"
        if not grid.exists():
            raise UsageError(f"{src} has no grid.csv (sweep not complete?)")
        rows = read_grid_csv(grid)
        if rows and "phase" in rows[0]:
            written.append(plots.plot_phase_map(rows, src / "phase_map.png"))
        else:
            written.append(plots.plot_cavity_grid(rows, src / "cavity_peaks.png"))
    elif src.exists():
        traj = Trajectory.load(src)
        stem = src.with_suffix("")
        written.append(plots.plot_trajectory(traj, stem.with_name(stem.name + "_trajectory.png")))
        res = field_spectrum(traj) if "re_a" in traj.extras else spectrum(traj.abs_delta, traj.dt)
        written.append(plots.plot_spectrum(res, stem.with_name(stem.name + "_spectrum.png")))
        csv = stem.with_name(stem.name + "_spectrum.csv")
        csv.write_text("omega,magnitude\n" + "".join(f"{f!r},{m!r}\n" for f, m in zip(res.frequencies, res.magnitudes)))
        written.append(csv)
    else:
        raise UsageError(f"{src} does not exist")
    for path in written:
        print(path)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cavitybcs", description="Mean-field BCS dynamics of two spin ensembles in a cavity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("evolve", help="integrate one trajectory")
    _add_point_flags(p)
    _add_run_flags(p)
    p.add_argument("--family", choices=["azimuthal", "elevation", "bcs_ground"])
    p.add_argument("--n", dest="n_per_ensemble", type=int, help="spins per ensemble")
    p.add_argument("--gamma", type=float, help="spontaneous emission rate in units of chi N")
    p.add_argument("--sign", dest="sign_convention", choices=["attractive", "repulsive"])
    p.add_argument("--splitting", dest="splitting_kind", choices=["equally_spaced", "uniform_random"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("lax", help="Lax roots and phase label for one parameter point")
    _add_point_flags(p)
    p.add_argument("--family", choices=["azimuthal", "elevation"], default="azimuthal")
    p.add_argument("--n-random", dest="n_random", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lax)

    p = sub.add_parser("phase-diagram", help="grid sweep with the lax, trajectory or cavity engine")
    p.add_argument("--config", help="sweep JSON config")
    p.add_argument("--engine", choices=["lax", "trajectory", "cavity"])
    p.add_argument("--out", dest="output", help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default $CAVITYBCS_WORKERS or 1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-resume", action="store_true", help="discard results already in the output directory")
    p.add_argument("--print-example", action="store_true", help="print an example config and exit")
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("cavity", help="realistic cavity run and field spectrum")
    _add_point_flags(p)
    _add_run_flags(p)
    p.add_argument("--n-sim", dest="n_sim", type=int, help="simulated atoms per ensemble")
    p.add_argument("--layout", choices=["blocked", "interleaved"])
    p.set_defaults(func=cmd_cavity)

    p = sub.add_parser("spectrum", help="spectrum of a saved trajectory")
    p.add_argument("trajectory", help="trajectory .csv or .json")
    p.add_argument("--signal", default="abs_delta", help="abs_delta, delta, field or an extra column")
    p.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"))
    p.add_argument("--rel-prominence", dest="rel_prominence", type=float, default=0.05)
    p.add_argument("--out", help="write the spectrum as CSV")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("selftest", help="special-function identities and conservation checks")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("report", help="render PNG figures next to a sweep directory or trajectory file")
    p.add_argument("source")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    from .core import GapSolverError
    from .dynamics import IntegrationError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, GapSolverError, NumericalFailure, FloatingPointError,
            NotImplementedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
