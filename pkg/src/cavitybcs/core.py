"""Model parameters, spin states, splitting distributions and initial states.

Conventions
-----------
Spins are classical Bloch vectors ``sigma_j = (<sx>, <sy>, <sz>)`` of Pauli
expectation values, so ``sigma^- = (sx - i sy) / 2``.  The Hamiltonian is

    H = s * chi * |sum_j g_j sigma^-_j|^2 + sum_j eps_j sigma^z_j

with ``s = -1`` for the attractive convention (default) and ``s = +1`` for
the repulsive one.  The first ``N`` spins form the ``+`` ensemble (mean
splitting ``+eps0/2``), the remaining ``N`` the ``-`` ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

ATTRACTIVE = "attractive"
REPULSIVE = "repulsive"


@dataclass(frozen=True)
class ModelParams:
    chi: float
    n_per_ensemble: int
    eps0: float = 0.0
    w: float = 0.0
    sign_convention: Literal["attractive", "repulsive"] = ATTRACTIVE

    def __post_init__(self):
        if not self.chi > 0:
            raise ValueError(f"chi must be positive, got {self.chi}")
        if int(self.n_per_ensemble) < 1:
            raise ValueError(f"n_per_ensemble must be >= 1, got {self.n_per_ensemble}")
        if self.w < 0 or self.eps0 < 0:
            raise ValueError("w and eps0 must be non-negative")
        if self.sign_convention not in (ATTRACTIVE, REPULSIVE):
            raise ValueError(f"unknown sign convention {self.sign_convention!r}")

    @classmethod
    def dimensionless(cls, w_over_chin: float, eps0_over_chin: float, n_per_ensemble: int,
                      chi_n: float = 1.0, sign_convention: str = ATTRACTIVE) -> "ModelParams":
        """Build parameters from the controls W/(chi N) and eps0/(chi N)."""
        return cls(chi=chi_n / n_per_ensemble, n_per_ensemble=n_per_ensemble,
                   eps0=eps0_over_chin * chi_n, w=w_over_chin * chi_n,
                   sign_convention=sign_convention)

    @property
    def chi_n(self) -> float:
        return self.chi * self.n_per_ensemble

    @property
    def sign(self) -> float:
        return -1.0 if self.sign_convention == ATTRACTIVE else 1.0

    @property
    def w_over_chin(self) -> float:
        return self.w / self.chi_n

    @property
    def eps0_over_chin(self) -> float:
        return self.eps0 / self.chi_n


@dataclass(frozen=True)
class SplittingSpec:
    eps0: float
    w: float
    n: int
    kind: Literal["equally_spaced", "uniform_random"] = "equally_spaced"
    seed: Optional[int] = None

    @classmethod
    def from_params(cls, params: ModelParams, **kwargs) -> "SplittingSpec":
        return cls(eps0=params.eps0, w=params.w, n=params.n_per_ensemble, **kwargs)


def sample_splittings(spec: SplittingSpec) -> np.ndarray:
    """Splittings for both ensembles, ``+`` ensemble first.

    Each ensemble is spread uniformly over ``[+-eps0/2 - W/4, +-eps0/2 + W/4]``;
    ``equally_spaced`` places the N midpoints of an even partition of that
    interval, ``uniform_random`` draws them from a seeded generator.
    """
    if spec.n < 1:
        raise ValueError("need at least one spin per ensemble")
    if spec.w < 0:
        raise ValueError("width must be non-negative")
    half = spec.w / 4.0
    if spec.kind == "equally_spaced":
        offsets = -half + (np.arange(spec.n) + 0.5) * (2.0 * half / spec.n)
        # symmetric grid: mirror so the ensemble mean is exactly the centre
        offsets = 0.5 * (offsets - offsets[::-1])
        plus, minus = spec.eps0 / 2 + offsets, -spec.eps0 / 2 + offsets
    elif spec.kind == "uniform_random":
        rng = np.random.default_rng(spec.seed)
        plus = rng.uniform(spec.eps0 / 2 - half, spec.eps0 / 2 + half, spec.n)
        minus = rng.uniform(-spec.eps0 / 2 - half, -spec.eps0 / 2 + half, spec.n)
    else:
        raise ValueError(f"unknown splitting kind {spec.kind!r}")
    return np.concatenate([plus, minus])


@dataclass(frozen=True, eq=False)
class SpinState:
    """Classical spin configuration of both ensembles.

    ``sigma`` has shape ``(2N, 3)``; ``ensemble_tag`` is +1 for the first N
    spins and -1 for the rest.
    """

    sigma: np.ndarray
    eps: np.ndarray
    g_weight: np.ndarray
    ensemble_tag: np.ndarray = field(default=None)

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        n_spins = sigma.shape[0]
        if sigma.shape != (n_spins, 3) or n_spins % 2:
            raise ValueError(f"sigma must have shape (2N, 3), got {sigma.shape}")
        eps = np.array(self.eps, dtype=float)
        weight = np.array(self.g_weight, dtype=float)
        if eps.shape != (n_spins,) or weight.shape != (n_spins,):
            raise ValueError("eps and g_weight must have one entry per spin")
        tag = self.ensemble_tag
        if tag is None:
            tag = np.repeat(np.array([1, -1], dtype=np.int8), n_spins // 2)
        tag = np.array(tag, dtype=np.int8)
        for name, arr in (("sigma", sigma), ("eps", eps), ("g_weight", weight), ("ensemble_tag", tag)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_spins(self) -> int:
        return self.sigma.shape[0]

    @property
    def n_per_ensemble(self) -> int:
        return self.n_spins // 2

    @property
    def lowering(self) -> np.ndarray:
        """Per-spin ``sigma^-_j``."""
        return 0.5 * (self.sigma[:, 0] - 1j * self.sigma[:, 1])

    def with_sigma(self, sigma: np.ndarray) -> "SpinState":
        return SpinState(sigma, self.eps, self.g_weight, self.ensemble_tag)


@dataclass(frozen=True)
class InitialStateSpec:
    family: Literal["azimuthal", "elevation", "bcs_ground", "cavity_realistic"]
    angle: float = 0.0
    delta_gs: Optional[float] = None

    def __post_init__(self):
        if self.family not in ("azimuthal", "elevation", "bcs_ground", "cavity_realistic"):
            raise ValueError(f"unknown initial-state family {self.family!r}")
        if not -math.pi - 1e-12 <= self.angle <= math.pi + 1e-12:
            raise ValueError(f"opening angle must lie in [-pi, pi], got {self.angle}")


def prepare_initial_state(spec: InitialStateSpec, splittings: np.ndarray,
                          chi: Optional[float] = None) -> SpinState:
    """Product state for one of the ideal initial-state families.

    ``bcs_ground`` needs ``chi`` unless ``spec.delta_gs`` is given.  The
    realistic cavity preparation lives in :mod:`cavitybcs.cavity`.
    """
    eps = np.asarray(splittings, dtype=float)
    n_spins = eps.size
    if n_spins % 2:
        raise ValueError("splittings must cover two equal ensembles")
    tag = np.repeat(np.array([1.0, -1.0]), n_spins // 2)
    half = spec.angle / 2.0
    sigma = np.zeros((n_spins, 3))
    if spec.family == "azimuthal":
        sigma[:, 0] = math.cos(half)
        sigma[:, 1] = tag * math.sin(half)
    elif spec.family == "elevation":
        sigma[:, 0] = math.cos(half)
        sigma[:, 2] = tag * math.sin(half)
    elif spec.family == "bcs_ground":
        if spec.delta_gs is None and chi is None:
            raise ValueError("bcs_ground needs chi or an explicit delta_gs")
        return bcs_ground_state(chi, eps, delta_gs=spec.delta_gs)
    else:
        raise ValueError("cavity_realistic states are prepared by cavitybcs.cavity.prepare_cavity_state")
    return SpinState(sigma, eps, np.ones(n_spins))


class GapSolverError(RuntimeError):
    pass


def gap_function(delta: float, chi: float, eps: np.ndarray) -> float:
    """``1 - (chi/2) sum_j 1/sqrt(delta^2 + eps_j^2)``; zero at the BCS gap, increasing in delta."""
    with np.errstate(divide="ignore", over="ignore"):
        return 1.0 - 0.5 * chi * float(np.sum(1.0 / np.hypot(delta, eps)))


def solve_gap(chi: float, splittings, rtol: float = 1e-12, max_iter: int = 400) -> float:
    """Self-consistent pairing gap ``Delta = chi * sum_j (1/2) Delta / sqrt(Delta^2 + eps_j^2)``.

    Bisection on ``(0, chi * 2N]``.  Returns 0.0 when only the trivial
    solution exists.
    """
    eps = np.asarray(splittings, dtype=float)
    if not chi > 0:
        raise ValueError("chi must be positive")
    if eps.size == 0:
        raise ValueError("need at least one splitting")
    if gap_function(0.0, chi, eps) >= 0.0:
        return 0.0
    lo, hi = 0.0, chi * eps.size
    if gap_function(hi, chi, eps) < 0.0:
        raise GapSolverError(f"no sign change in bracket [0, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if gap_function(mid, chi, eps) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            return hi
    raise GapSolverError(f"bisection did not converge; bracket [{lo!r}, {hi!r}]")


def bcs_ground_state(chi: Optional[float], splittings, delta_gs: Optional[float] = None) -> SpinState:
    """Spin configuration ``sigma^+ = Delta / (2E)``, ``sigma^z = eps / E``, ``E = sqrt(Delta^2 + eps^2)``.

    Note the inversion follows the sign of ``eps_j``: the configuration is
    stationary under the repulsive convention (each spin parallel to its
    mean field), i.e. it is the attractive ground state with ``eps -> -eps``.
    """
    eps = np.asarray(splittings, dtype=float)
    delta = solve_gap(chi, eps) if delta_gs is None else float(delta_gs)
    if delta <= 0.0:
        raise ValueError("normal state (Delta_gs = 0): pairing phase undefined")
    energy = np.hypot(delta, eps)
    sigma = np.column_stack([delta / energy, np.zeros_like(eps), eps / energy])
    return SpinState(sigma, eps, np.ones_like(eps))
