"""Experimentally realistic cavity layer.

Atoms sit on lattice sites ``j = 1..2N`` with couplings ``g_j = g cos(k_d j)``.
The adiabatically eliminated cavity mediates ``chi_ij = -g_i g_j / delta_c``,
which is positive for red detuning, so the simulation runs the repulsive
sign convention with rank-one weights ``w_j = cos(k_d j)``; ``|Delta(t)|`` is
the same for either sign on these initial states.

Units: :class:`CavityParams` holds SI angular frequencies.  Internally all
rates are divided by the collective scale ``chi N_true`` with
``chi = g^2 / |delta_c|``; results are converted back here and nowhere else.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import REPULSIVE, ModelParams, SpinState, SplittingSpec, sample_splittings
from .dynamics import EvolutionConfig, Trajectory, integrate

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CavityParams:
    g: float = TWO_PI * 10.9e3
    gamma: float = TWO_PI * 7.5e3
    delta_c: float = -TWO_PI * 50e6
    kappa: float = TWO_PI * 153e3
    lambda_lattice: float = 813e-9
    lambda_cavity: float = 689e-9
    n_sim: int = 500
    n_true: float = 1e6
    omega0: float = math.inf
    layout: Literal["interleaved", "blocked"] = "blocked"
    k_d_override: float | None = None
    shuffle_seed: int | None = 0

    def __post_init__(self):
        if self.delta_c == 0:
            raise ValueError("delta_c must be non-zero")
        if self.n_sim < 1 or self.n_true < 1:
            raise ValueError("atom numbers must be positive")
        if self.layout not in ("interleaved", "blocked"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.gamma < 0 or self.kappa < 0:
            raise ValueError("rates must be non-negative")

    @property
    def k_d(self) -> float:
        if self.k_d_override is not None:
            return self.k_d_override
        return math.pi * self.lambda_lattice / self.lambda_cavity

    @property
    def chi(self) -> float:
        """Bare single-pair coupling ``g^2 / |delta_c|`` (rad/s)."""
        return self.g**2 / abs(self.delta_c)

    @property
    def chi_n(self) -> float:
        """Collective scale ``chi N_true`` (rad/s) used for all dimensionless axes."""
        return self.chi * self.n_true

    @property
    def chi_eff_n(self) -> float:
        """``chi N`` after averaging ``cos^2(k_d j)`` to 1/2."""
        return 0.5 * self.chi_n

    @property
    def adiabatic_ratio(self) -> float:
        """``|delta_c| / (g sqrt(2 N_true))``; the model assumes this is large."""
        return abs(self.delta_c) / (self.g * math.sqrt(2 * self.n_true))


def lattice_sites(n: int, layout: str = "blocked") -> np.ndarray:
    """Site index of every spin, ``+`` ensemble first."""
    if n < 1:
        raise ValueError("n must be >= 1")
    j = np.arange(1, 2 * n + 1)
    if layout == "interleaved":
        return np.concatenate([j[0::2], j[1::2]])
    if layout == "blocked":
        return j
    raise ValueError(f"unknown layout {layout!r}")


def coupling_weights(n: int, k_d: float, layout: str = "blocked") -> np.ndarray:
    """``g_j / g = cos(k_d j)`` for the 2n spins, ordered ``+`` ensemble first."""
    return np.cos(k_d * lattice_sites(n, layout))


def assign_splittings(splittings: np.ndarray, seed: int | None) -> np.ndarray:
    """Randomly permute splittings within each ensemble (``seed=None`` keeps lattice order).

    Splittings written in lattice order share the quasi-periodicity of
    ``cos(k_d j)``, which produces spurious coherent revivals of Delta.
    """
    eps = np.array(splittings, dtype=float)
    if seed is None:
        return eps
    n = eps.size // 2
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.permutation(eps[:n]), rng.permutation(eps[n:])])


def prepare_cavity_state(dphi: float, cavity: CavityParams, splittings: np.ndarray) -> SpinState:
    """Inhomogeneous pulse from the ground state followed by the differential rotation.

    The pulse area on site j is ``(pi/2) cos(k_d j)``, so
    ``sigma_j = (sin th_j cos(+-dphi/2), +-sin th_j sin(dphi/2), -cos th_j)``.
    """
    eps = np.asarray(splittings, dtype=float)
    n = eps.size // 2
    if eps.size != 2 * n or n != cavity.n_sim:
        raise ValueError(f"expected {2 * cavity.n_sim} splittings, got {eps.size}")
    weights = coupling_weights(n, cavity.k_d, cavity.layout)
    theta = 0.5 * math.pi * weights
    tag = np.repeat([1.0, -1.0], n)
    half = 0.5 * dphi
    sigma = np.column_stack([
        np.sin(theta) * math.cos(half),
        tag * np.sin(theta) * math.sin(half),
        -np.cos(theta),
    ])
    return SpinState(sigma, eps, weights)


def field_prefactor(cavity: CavityParams) -> complex:
    return -2.0 / (2.0 * cavity.delta_c - 1j * cavity.kappa)


def intracavity_field(state: SpinState, cavity: CavityParams, scale: float = 1.0) -> complex:
    """``a = -2 / (2 delta_c - i kappa) * g * sum_j w_j sigma^-_j``, times ``scale``.

    ``scale = n_true / n_sim`` converts a simulated ensemble to the target
    atom number.
    """
    s_minus = 0.5 * np.dot(state.g_weight, state.sigma[:, 0] - 1j * state.sigma[:, 1])
    return complex(field_prefactor(cavity) * cavity.g * scale * s_minus)


def run_cavity_experiment(dphi: float, eps0: float, w: float, cavity: CavityParams = CavityParams(),
                          evolution: EvolutionConfig = EvolutionConfig(),
                          splitting_kind: str = "equally_spaced", seed: int | None = None) -> Trajectory:
    """Realistic quench: cavity state preparation, weighted dynamics with decay, field readout.

    ``eps0`` and ``w`` are SI angular frequencies; ``evolution.t_max`` is in
    units of ``1/(chi N_true)`` and ``evolution.gamma`` is replaced by the
    cavity's spontaneous-emission rate.  The returned trajectory has times in
    seconds, ``delta`` and ``energy`` in rad/s, and extra columns
    ``re_a``, ``im_a``, ``abs_a_sq``.
    """
    scale = cavity.chi_n
    n = cavity.n_sim
    params = ModelParams(chi=1.0 / n, n_per_ensemble=n, eps0=eps0 / scale, w=w / scale,
                         sign_convention=REPULSIVE)
    eps = sample_splittings(SplittingSpec.from_params(params, kind=splitting_kind, seed=seed))
    eps = assign_splittings(eps, cavity.shuffle_seed)
    state = prepare_cavity_state(dphi, cavity, eps)
    config = dataclasses.replace(evolution, gamma=cavity.gamma / scale)
    traj = integrate(state, params, config)

    # Delta = chi_sim * S_w^- in units of chi N_true, and chi_sim = 1/n_sim
    s_minus_true = traj.delta * n * (cavity.n_true / n)
    a = field_prefactor(cavity) * cavity.g * s_minus_true
    meta = dict(traj.meta)
    meta.update({
        "units": "SI", "chi_n_si": scale, "n_sim": n, "n_true": cavity.n_true, "k_d": cavity.k_d,
        "layout": cavity.layout, "dphi": dphi, "eps0_si": eps0, "w_si": w,
        "gamma_si": cavity.gamma, "kappa_si": cavity.kappa, "delta_c_si": cavity.delta_c, "g_si": cavity.g,
    })
    return Trajectory(
        times=traj.times / scale, delta=traj.delta * scale, jz=traj.jz * (cavity.n_true / n),
        energy=traj.energy * scale * (cavity.n_true / n), mean_norm=traj.mean_norm,
        max_norm_dev=traj.max_norm_dev,
        extras={"re_a": a.real, "im_a": a.imag, "abs_a_sq": np.abs(a) ** 2},
        meta=meta,
    )
