"""Mean-field Bloch equations and trajectory integration.

Each spin precesses about its effective field,
``d sigma_j / dt = B_j x sigma_j`` with
``B_j = (2 s chi g_j Re S_w^-, -2 s chi g_j Im S_w^-, 2 eps_j)`` and
``S_w^- = sum_k g_k sigma^-_k``, i.e. ``B_j = (s chi g_j Sx_w, s chi g_j Sy_w, 2 eps_j)``.
Spontaneous emission at rate ``gamma`` adds ``-gamma/2`` damping of the
transverse components and relaxation of ``sigma^z`` towards -1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import DOP853, RK45

from .core import ModelParams, SpinState

TRAJECTORY_COLUMNS = ("t", "re_delta", "im_delta", "abs_delta", "jz", "energy", "mean_norm", "max_norm_dev")

_STEPPERS = {"RK45": RK45, "DOP853": DOP853}


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t!r})")
        self.t = t


@dataclass(frozen=True)
class EvolutionConfig:
    """Integration settings.

    ``t_max`` is in units of ``1/(chi N)``.  ``n_samples`` uniformly spaced
    output samples include t = 0 and t_max; ``snapshot_stride > 0`` keeps
    every k-th full spin configuration.
    """

    t_max: float = 200.0
    n_samples: int = 4096
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    gamma: float = 0.0
    dt_initial: Optional[float] = None
    snapshot_stride: int = 0
    method: str = "RK45"

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.method not in _STEPPERS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(_STEPPERS)}")


@dataclass
class Trajectory:
    times: np.ndarray
    delta: np.ndarray
    jz: np.ndarray
    energy: np.ndarray
    mean_norm: np.ndarray
    max_norm_dev: np.ndarray
    extras: dict = field(default_factory=dict)
    lax_q: Optional[np.ndarray] = None
    snapshots: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def abs_delta(self) -> np.ndarray:
        return np.abs(self.delta)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def columns(self) -> dict:
        cols = {
            "t": self.times,
            "re_delta": self.delta.real,
            "im_delta": self.delta.imag,
            "abs_delta": np.abs(self.delta),
            "jz": self.jz,
            "energy": self.energy,
            "mean_norm": self.mean_norm,
            "max_norm_dev": self.max_norm_dev,
        }
        cols.update(self.extras)
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in zip(*cols.values()):
                writer.writerow([repr(float(x)) for x in row])

    def to_json(self, path) -> None:
        payload = {"columns": {k: [float(x) for x in v] for k, v in self.columns().items()},
                   "meta": self.meta}
        Path(path).write_text(json.dumps(payload, indent=1))

    @classmethod
    def from_columns(cls, cols: dict, meta: Optional[dict] = None) -> "Trajectory":
        known = set(TRAJECTORY_COLUMNS) | {"abs_delta"}
        extras = {k: np.asarray(v, dtype=float) for k, v in cols.items() if k not in known}
        return cls(
            times=np.asarray(cols["t"], dtype=float),
            delta=np.asarray(cols["re_delta"], dtype=float) + 1j * np.asarray(cols["im_delta"], dtype=float),
            jz=np.asarray(cols["jz"], dtype=float),
            energy=np.asarray(cols["energy"], dtype=float),
            mean_norm=np.asarray(cols.get("mean_norm", np.ones(len(cols["t"]))), dtype=float),
            max_norm_dev=np.asarray(cols.get("max_norm_dev", np.zeros(len(cols["t"]))), dtype=float),
            extras=extras,
            meta=meta or {},
        )

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(x) for x in row] for row in reader])
        return cls.from_columns({name: rows[:, i] for i, name in enumerate(header)})

    @classmethod
    def from_json(cls, path) -> "Trajectory":
        payload = json.loads(Path(path).read_text())
        return cls.from_columns(payload["columns"], payload.get("meta"))

    @classmethod
    def load(cls, path) -> "Trajectory":
        return cls.from_json(path) if str(path).endswith(".json") else cls.from_csv(path)


def _rhs_flat(y: np.ndarray, eps: np.ndarray, weight: np.ndarray, coupling: float, gamma: float) -> np.ndarray:
    # y is (3, n) flattened; coupling = s * chi
    sx, sy, sz = y.reshape(3, -1)
    field_x = coupling * weight * np.dot(weight, sx)
    field_y = coupling * weight * np.dot(weight, sy)
    field_z = 2.0 * eps
    out = np.empty((3, sx.size))
    out[0] = field_y * sz - field_z * sy
    out[1] = field_z * sx - field_x * sz
    out[2] = field_x * sy - field_y * sx
    if gamma:
        out[0] -= 0.5 * gamma * sx
        out[1] -= 0.5 * gamma * sy
        out[2] -= gamma * (sz + 1.0)
    return out.ravel()


def bloch_rhs(state: SpinState, params: ModelParams, gamma: float = 0.0) -> np.ndarray:
    """Time derivative of every Bloch vector, shape ``(2N, 3)``."""
    y = np.ascontiguousarray(state.sigma.T).ravel()
    d = _rhs_flat(y, state.eps, state.g_weight, params.sign * params.chi, gamma)
    return d.reshape(3, -1).T.copy()


def weighted_lowering(sigma: np.ndarray, weight: np.ndarray) -> complex:
    """``sum_j g_j sigma^-_j`` for ``sigma`` of shape (2N, 3)."""
    return complex(0.5 * np.dot(weight, sigma[:, 0] - 1j * sigma[:, 1]))


def pairing_amplitude(state: SpinState, params: ModelParams) -> complex:
    """Delta = chi * sum_j g_j sigma^-_j."""
    return params.chi * weighted_lowering(state.sigma, state.g_weight)


def energy(state: SpinState, params: ModelParams) -> float:
    """Mean-field energy ``s chi |sum g_j sigma^-_j|^2 + sum eps_j sigma^z_j``."""
    s_minus = weighted_lowering(state.sigma, state.g_weight)
    return params.sign * params.chi * abs(s_minus) ** 2 + float(np.dot(state.eps, state.sigma[:, 2]))


class _Recorder:
    """Reduces dense-output blocks of spin configurations to observables."""

    def __init__(self, state0: SpinState, params: ModelParams, n_samples: int,
                 probes: Optional[np.ndarray], snapshot_stride: int):
        self.eps = state0.eps
        self.weight = state0.g_weight
        self.plus = state0.ensemble_tag > 0
        self.chi = params.chi
        self.coupling = params.sign * params.chi
        self.sign = params.sign
        self.delta = np.empty(n_samples, dtype=complex)
        self.jz = np.empty(n_samples)
        self.energy = np.empty(n_samples)
        self.mean_norm = np.empty(n_samples)
        self.max_norm_dev = np.empty(n_samples)
        self.probes = probes
        self.lax_q = None if probes is None else np.empty((n_samples, probes.size), dtype=complex)
        self.snapshot_stride = snapshot_stride
        self.snapshots = []

    def record(self, start: int, block: np.ndarray) -> None:
        # block: (3 * n, k)
        k = block.shape[1]
        sx, sy, sz = block.reshape(3, -1, k)
        sl = slice(start, start + k)
        s_minus = 0.5 * (self.weight @ sx - 1j * (self.weight @ sy))
        self.delta[sl] = self.chi * s_minus
        self.jz[sl] = 0.5 * (sz[self.plus].sum(axis=0) - sz[~self.plus].sum(axis=0))
        self.energy[sl] = self.coupling * np.abs(s_minus) ** 2 + self.eps @ sz
        norms = np.sqrt(sx**2 + sy**2 + sz**2)
        self.mean_norm[sl] = norms.mean(axis=0)
        self.max_norm_dev[sl] = np.abs(norms - 1.0).max(axis=0)
        if self.probes is not None:
            from .lax import lax_squared_discrete

            for i in range(k):
                sig = np.stack([sx[:, i], sy[:, i], sz[:, i]], axis=1)
                self.lax_q[start + i] = lax_squared_discrete(self.probes, sig, self.eps, self.chi, self.sign)
        if self.snapshot_stride:
            for i in range(k):
                if (start + i) % self.snapshot_stride == 0:
                    self.snapshots.append(np.stack([sx[:, i], sy[:, i], sz[:, i]], axis=1))


def integrate(state0: SpinState, params: ModelParams, config: EvolutionConfig = EvolutionConfig(),
              lax_probes: Optional[Sequence[float]] = None) -> Trajectory:
    """Integrate the mean-field equations with an adaptive embedded Runge-Kutta pair.

    The default ``RK45`` is the Dormand-Prince 5(4) pair; observables are
    evaluated from its continuous extension at uniformly spaced sample times,
    so memory stays O(N + n_samples).  ``lax_probes`` records the squared Lax
    norm of the evolving state at the given spectral parameters.
    """
    t_end = config.t_max / params.chi_n
    sample_t = np.linspace(0.0, t_end, config.n_samples)
    probes = None if lax_probes is None else np.asarray(lax_probes, dtype=complex)
    rec = _Recorder(state0, params, config.n_samples, probes, config.snapshot_stride)
    y0 = np.ascontiguousarray(state0.sigma.T).ravel()
    rec.record(0, y0[:, None])

    eps, weight = state0.eps, state0.g_weight
    coupling, gamma = params.sign * params.chi, config.gamma

    def fun(t, y):
        return _rhs_flat(y, eps, weight, coupling, gamma)

    stepper = _STEPPERS[config.method](
        fun, 0.0, y0, t_end, rtol=config.rel_tol, atol=config.abs_tol,
        first_step=None if config.dt_initial is None else config.dt_initial / params.chi_n,
    )
    next_idx = 1
    n_steps = 0
    while next_idx < config.n_samples:
        t_old = stepper.t
        message = stepper.step()
        n_steps += 1
        if stepper.status == "failed":
            raise IntegrationError(f"integration failed: {message}", t_old)
        stop = np.searchsorted(sample_t, stepper.t, side="right")
        if stepper.status == "finished":
            stop = config.n_samples
        if stop > next_idx:
            ts = sample_t[next_idx:stop]
            block = stepper.dense_output()(ts)
            if stop == config.n_samples and stepper.status == "finished":
                block[:, -1] = stepper.y
            rec.record(next_idx, block.reshape(y0.size, -1))
            next_idx = stop

    meta = {
        "chi": params.chi, "n_per_ensemble": params.n_per_ensemble, "eps0": params.eps0, "w": params.w,
        "sign_convention": params.sign_convention, "gamma": gamma, "t_max_over_chin": config.t_max,
        "rel_tol": config.rel_tol, "abs_tol": config.abs_tol, "method": config.method, "n_steps": n_steps,
    }
    return Trajectory(
        times=sample_t, delta=rec.delta, jz=rec.jz, energy=rec.energy, mean_norm=rec.mean_norm,
        max_norm_dev=rec.max_norm_dev, lax_q=rec.lax_q,
        snapshots=np.array(rec.snapshots) if rec.snapshots else None, meta=meta,
    )


def final_state(state0: SpinState, params: ModelParams, config: EvolutionConfig) -> SpinState:
    """Spin configuration at ``t_max`` (convenience for restarts and tests)."""
    traj = integrate(state0, params, EvolutionConfig(
        t_max=config.t_max, n_samples=2, rel_tol=config.rel_tol, abs_tol=config.abs_tol,
        gamma=config.gamma, method=config.method, snapshot_stride=1))
    return state0.with_sigma(traj.snapshots[-1])


__all__ = [
    "EvolutionConfig", "IntegrationError", "Trajectory", "TRAJECTORY_COLUMNS", "bloch_rhs", "energy",
    "final_state", "integrate", "pairing_amplitude", "weighted_lowering",
]
