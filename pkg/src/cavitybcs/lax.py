"""Lax-vector analysis of the classical pseudospin BCS model.

The Lax vector of an initial configuration is

    L(u) = (1/2) sum_j sigma_j / (u - eps_j) + s z_hat / chi ,

with ``s = -1`` for the attractive convention.  Complex roots of
``Q(u) = chi^2 L(u).L(u)`` classify the asymptotic dynamics: no complex pair
is phase I, one pair phase II, two pairs phase III.  Roots come in conjugate
pairs; a :class:`LaxRootSet` stores the upper-half-plane member of each.

For the two-ensemble states the continuum limit of each ensemble's sum,
``(chi/2) sum_j 1/(u - eps_j)``, is ``(2 chi N / W) atanh(W / (4u -+ 2 eps0))``.
With the principal ``atanh`` this places the branch cut exactly on the
ensemble's support, so the function is the analytic continuation of the
discrete sum everywhere off the real support.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from .core import ModelParams
from .special import complex_atanh, elliptic_K, jacobi_sn

Family = Literal["azimuthal", "elevation"]

IMAG_TOL = 1e-6
SUBPHASE_TOL = 1e-4
ROOT_TOL = 1e-10
N_RANDOM_SEEDS = 32
RESIDUAL_MAX = 1e-8


# --------------------------------------------------------------------------- types

@dataclass(frozen=True)
class LaxRootSet:
    """Upper-half-plane representatives of the complex conjugate root pairs."""

    roots: tuple = ()
    undetermined: bool = False
    reason: str = ""
    residuals: tuple = ()

    @property
    def n_pairs(self) -> int:
        return len(self.roots)

    @property
    def pairs(self) -> list:
        return [(u, u.conjugate()) for u in self.roots]

    def _two(self):
        if self.n_pairs != 2:
            return None
        return self.roots[0], self.roots[1]

    @property
    def r_plus(self) -> Optional[float]:
        two = self._two()
        return None if two is None else (abs(two[0].imag) + abs(two[1].imag)) ** 2

    @property
    def r_minus(self) -> Optional[float]:
        two = self._two()
        return None if two is None else (abs(two[0].imag) - abs(two[1].imag)) ** 2

    @property
    def r_tilde(self) -> Optional[float]:
        two = self._two()
        return None if two is None else (two[0].real - two[1].real) ** 2

    @property
    def r_ratio(self) -> Optional[float]:
        """R_- / R_+, the sub-phase order parameter."""
        rp = self.r_plus
        return None if rp is None or rp == 0 else self.r_minus / rp

    def as_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "roots": [[u.real, u.imag] for u in self.roots],
            "r_plus": self.r_plus, "r_minus": self.r_minus, "r_tilde": self.r_tilde,
            "undetermined": self.undetermined, "reason": self.reason,
        }


def make_root_set(candidates: Iterable[complex], scale: float = 1.0, imag_tol: float = IMAG_TOL,
                  dedupe_tol: float = 1e-7, residuals: Sequence[float] = (),
                  complete: bool = False) -> LaxRootSet:
    """Fold candidates into the upper half plane, drop real roots and duplicates.

    ``complete=True`` means the candidates are every root of a polynomial with
    real coefficients, listed with multiplicity: the upper-half-plane members
    are kept as they are, so a double pair counts twice.
    """
    kept: list[complex] = []
    for u in candidates:
        u = complex(u)
        if complete:
            if u.imag >= imag_tol * scale:
                kept.append(u)
            continue
        if u.imag < 0:
            u = u.conjugate()
        if u.imag < imag_tol * scale:
            continue
        if any(abs(u - v) < dedupe_tol * scale for v in kept):
            continue
        kept.append(u)
    kept.sort(key=lambda z: (round(z.real / scale, 9), z.imag))
    return LaxRootSet(roots=tuple(kept), residuals=tuple(residuals))


@dataclass(frozen=True)
class PhaseLabel:
    phase: str
    provenance: Literal["lax", "trajectory"]
    detail: dict = field(default_factory=dict)


# ------------------------------------------------------------------ discrete Lax

def lax_vector_discrete(u, sigma: np.ndarray, eps: np.ndarray, chi: float, sign: float = -1.0) -> np.ndarray:
    """``chi L(u)`` for an explicit spin configuration; shape ``(len(u), 3)``."""
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    kernel = 0.5 * chi / (u[:, None] - eps[None, :])
    vec = kernel @ np.asarray(sigma, dtype=float)
    vec[:, 2] += sign
    return vec


def lax_squared_discrete(u, sigma: np.ndarray, eps: np.ndarray, chi: float, sign: float = -1.0) -> np.ndarray:
    """``Q(u) = chi^2 L(u).L(u)`` for an explicit configuration (no complex conjugation)."""
    vec = lax_vector_discrete(u, sigma, eps, chi, sign)
    return np.sum(vec * vec, axis=1)


# ----------------------------------------------------------------- continuum Lax

def _support_check(u: np.ndarray, params: ModelParams) -> None:
    tol = 1e-12 * max(params.w, 1e-300)
    for centre in (params.eps0 / 2, -params.eps0 / 2):
        lo, hi = centre - params.w / 4, centre + params.w / 4
        dist = np.where(u.real < lo, np.abs(u - lo), np.where(u.real > hi, np.abs(u - hi), np.abs(u.imag)))
        if np.any(dist <= tol):
            raise ValueError("spectral parameter on (or within 1e-12 W of) the splitting support")


def _ensemble_sums(u: np.ndarray, params: ModelParams):
    """Continuum ``(chi/2) sum_{j in +-} 1/(u - eps_j)`` and their u-derivatives."""
    chi_n, w, e0 = params.chi_n, params.w, params.eps0
    out = []
    for centre in (e0 / 2, -e0 / 2):
        x = u - centre
        if w == 0.0:
            val = 0.5 * chi_n / x
            der = -0.5 * chi_n / x**2
        else:
            h = w / 4
            val = (2.0 * chi_n / w) * complex_atanh(h / x)
            der = -0.5 * chi_n / (x * x - h * h)
        out.append((np.asarray(val), np.asarray(der)))
    return out


def _components(u: np.ndarray, params: ModelParams, family: str, angle: float, with_derivative: bool = False):
    (p, dp), (m, dm) = _ensemble_sums(u, params)
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    sign = params.sign
    if family == "azimuthal":
        lx, ly, lz = c * (p + m), s * (p - m), np.full_like(p, sign)
        dlx, dly, dlz = c * (dp + dm), s * (dp - dm), np.zeros_like(p)
    elif family == "elevation":
        lx, ly, lz = c * (p + m), np.zeros_like(p), s * (p - m) + sign
        dlx, dly, dlz = c * (dp + dm), np.zeros_like(p), s * (dp - dm)
    else:
        raise ValueError(f"no continuum Lax vector for family {family!r}")
    if with_derivative:
        return (lx, ly, lz), (dlx, dly, dlz)
    return lx, ly, lz


def lax_components_continuum(u, params: ModelParams, family: Family = "azimuthal", angle: float = 0.0):
    """Continuum ``(chi Lx, chi Ly, chi Lz)`` at complex ``u`` (scalar or array).

    Raises ``ValueError`` when ``u`` sits on the real support of the
    splittings, where the components have their branch cuts.
    """
    arr = np.asarray(u, dtype=complex)
    _support_check(np.atleast_1d(arr), params)
    comps = _components(arr, params, family, angle)
    if arr.ndim == 0:
        return tuple(complex(x) for x in comps)
    return comps


def lax_squared(u, params: ModelParams, family: Family = "azimuthal", angle: float = 0.0):
    """Continuum ``Q(u) = (chi Lx)^2 + (chi Ly)^2 + (chi Lz)^2``; tends to 1 at infinity."""
    lx, ly, lz = lax_components_continuum(u, params, family, angle)
    q = np.asarray(lx) ** 2 + np.asarray(ly) ** 2 + np.asarray(lz) ** 2
    return complex(q) if np.ndim(q) == 0 else q


def _q_and_derivative(u: np.ndarray, params: ModelParams, family: str, angle: float):
    (lx, ly, lz), (dlx, dly, dlz) = _components(u, params, family, angle, with_derivative=True)
    q = lx * lx + ly * ly + lz * lz
    dq = 2.0 * (lx * dlx + ly * dly + lz * dlz)
    return q, dq


# -------------------------------------------------------------- analytic roots

def analytic_roots_antipodal(params: ModelParams) -> LaxRootSet:
    """Closed-form roots at opening angle pi (two pairs for W/(chi N) < pi, none otherwise)."""
    chi_n, w, e0 = params.chi_n, params.w, params.eps0
    ratio = w / chi_n
    if ratio >= math.pi:
        return LaxRootSet()
    if ratio == 0.0:
        z = [e0**2 / 4 + 0.5j * chi_n * e0, e0**2 / 4 - 0.5j * chi_n * e0]
        return make_root_set([cmath.sqrt(v) for v in z] + [-cmath.sqrt(v) for v in z], scale=chi_n,
                             complete=True)
    a, b = w - 2 * e0, w + 2 * e0
    cands = []
    for sgn in (-1, 1):
        phase = cmath.exp(sgn * 1j * ratio)
        u = 0.25 * cmath.sqrt((a * a - phase * b * b) / (1 - phase))
        cands += [u, -u]
    return make_root_set(cands, scale=chi_n, complete=True)


def analytic_roots_smallW(params: ModelParams, family: Family = "azimuthal", angle: float = 0.0) -> LaxRootSet:
    """Lowest-order-in-W roots (exact at W = 0) for either initial-state family."""
    chi_n, e0 = params.chi_n, params.eps0
    if family == "azimuthal":
        c = math.cos(angle)
        inner = cmath.sqrt(chi_n**2 * (3 + 4 * c + math.cos(2 * angle)) - 8 * e0**2)
        cands = []
        for pm in (1, -1):
            u = 0.5 * cmath.sqrt(e0**2 - chi_n**2 * (1 + c) + pm * chi_n / math.sqrt(2) * inner)
            cands += [u, -u]
    elif family == "elevation":
        if abs(abs(angle) - math.pi) < 1e-12:
            raise ValueError("elevation opening angle +-pi is the trivial polarised case")
        real_part = 0.25 * cmath.sqrt(4 * e0**2 - 2 * chi_n**2
                                      - 2 * chi_n * (chi_n * math.cos(angle) - 4 * e0 * math.sin(angle / 2)))
        imag_part = 0.5j * chi_n * math.cos(angle / 2)
        cands = [s1 * real_part + s2 * imag_part for s1 in (1, -1) for s2 in (1, -1)]
    else:
        raise ValueError(f"unknown family {family!r}")
    return make_root_set(cands, scale=chi_n, complete=True)


def analytic_roots_smallEps(params: ModelParams, family: Family = "azimuthal", angle: float = 0.0) -> LaxRootSet:
    """Single imaginary pair for eps0 << W, chi N, present while W/(chi N) < 2 pi cos(angle/2).

    The root is ``u = i (W/4) cot[(W / (4 chi N)) sec(angle/2)]``, which tends
    to ``i chi N cos(angle/2)`` as W -> 0 and to the real axis at the boundary.
    """
    if family not in ("azimuthal", "elevation"):
        raise ValueError(f"unknown family {family!r}")
    chi_n, w = params.chi_n, params.w
    c = math.cos(angle / 2)
    if c <= 0 or w / chi_n >= 2 * math.pi * c:
        return LaxRootSet()
    if w == 0.0:
        return make_root_set([1j * chi_n * c], scale=chi_n)
    arg = w / (4 * chi_n * c)
    return make_root_set([1j * (w / 4) / math.tan(arg)], scale=chi_n)


def critical_splitting(chi_n: float, angle: float) -> float:
    """Splitting separating sub-phases IIIa and IIIb at small W: (chi N / 2)(1 + cos angle)."""
    return 0.5 * chi_n * (1.0 + math.cos(angle))


# ---------------------------------------------------------------- numeric roots

def _newton(seeds: np.ndarray, params: ModelParams, family: str, angle: float,
            max_iter: int = 80, tol: float = 1e-13):
    u = np.array(seeds, dtype=complex)
    scale = params.chi_n
    max_step = 0.5 * scale
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            q, dq = _q_and_derivative(u, params, family, angle)
            step = q / dq
            big = np.abs(step) > max_step
            step = np.where(big, step / np.abs(step) * max_step, step)
            step = np.where(np.isfinite(step), step, 0.0)
            u = u - step
            # Q(conj u) = conj Q(u): iterate in the upper half plane
            u = np.where(u.imag < 0, u.conj(), u)
            u = np.where(u.imag == 0, u + 1e-9j * scale, u)
            if np.all((np.abs(q) < tol) | ~np.isfinite(q)):
                break
        q, _ = _q_and_derivative(u, params, family, angle)
    return u, np.abs(q)


def _random_seeds(params: ModelParams, rng: np.random.Generator, count: int) -> np.ndarray:
    span = params.eps0 / 2 + params.w / 4 + params.chi_n
    re = rng.uniform(-1.2 * span, 1.2 * span, count)
    im = params.chi_n * np.exp(rng.uniform(math.log(1e-3), math.log(1.5), count))
    return re + 1j * im


def _structured_seeds(params: ModelParams) -> np.ndarray:
    chi_n = params.chi_n
    ys = chi_n * np.array([1e-4, 1e-3, 0.01, 0.05, 0.2, 0.5, 1.0])
    # centres and both edges of each support, where near-real roots live
    half = params.eps0 / 2
    edges = np.array([0.0, half, half + params.w / 4, half - params.w / 4])
    xs = np.unique(np.concatenate([edges, -edges]))
    return (xs[:, None] + 1j * ys[None, :]).ravel()


def find_roots_numeric(params: ModelParams, family: Family = "azimuthal", angle: float = 0.0,
                       seeds: Optional[Sequence[complex]] = None, n_random: int = N_RANDOM_SEEDS,
                       rng: Optional[np.random.Generator] = None, imag_tol: float = IMAG_TOL,
                       root_tol: float = ROOT_TOL) -> LaxRootSet:
    """Multi-start complex Newton search for the roots of the continuum ``Q(u)``.

    Seeds are the supplied continuation seeds, the small-W closed forms, a
    fixed lattice and ``n_random`` random points in the upper half plane.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    pool = [np.asarray(list(seeds or []), dtype=complex), _structured_seeds(params),
            _random_seeds(params, rng, n_random)]
    try:
        pool.append(np.asarray(analytic_roots_smallW(params, family, angle).roots, dtype=complex))
    except ValueError:
        pass
    start = np.concatenate(pool)
    start = np.where(start.imag <= 0, start.real + 1e-3j * params.chi_n, start)
    found, resid = _newton(start, params, family, angle)
    good = np.isfinite(found) & (resid < root_tol)
    roots = make_root_set(found[good], scale=params.chi_n, imag_tol=imag_tol)
    if roots.n_pairs:
        _, res = _newton(np.array(roots.roots), params, family, angle, max_iter=3)
        res = tuple(float(r) for r in res)
        bad = max(res) > RESIDUAL_MAX
        roots = LaxRootSet(roots=roots.roots, residuals=res, undetermined=bad,
                           reason=f"polished residual {max(res):.2e} above {RESIDUAL_MAX:g}" if bad else "")
    return roots


def scan_roots_w(w_values: Sequence[float], eps0: float, family: Family = "azimuthal", angle: float = 0.0,
                 chi_n: float = 1.0, n_random: int = N_RANDOM_SEEDS, seed: int = 0,
                 sign_convention: str = "attractive", imag_tol: float = IMAG_TOL) -> list[LaxRootSet]:
    """Root sets along increasing W with continuation.

    The search starts from the small-W closed forms and re-uses the roots at
    each W as seeds for the next.
    """
    rng = np.random.default_rng(seed)
    results = []
    prev: list[complex] = []
    for w in w_values:
        params = ModelParams(chi=chi_n, n_per_ensemble=1, eps0=eps0, w=float(w), sign_convention=sign_convention)
        roots = find_roots_numeric(params, family, angle, seeds=prev, n_random=n_random, rng=rng,
                                   imag_tol=imag_tol)
        results.append(roots)
        prev = list(roots.roots)
    return results


def locate_w_boundary(w_lo: float, w_hi: float, eps0: float, family: Family = "azimuthal", angle: float = 0.0,
                      chi_n: float = 1.0, seeds: Sequence[complex] = (), rel_tol: float = 1e-4,
                      n_random: int = 8) -> float:
    """Bisect the W at which the number of complex pairs changes between ``w_lo`` and ``w_hi``.

    ``seeds`` are roots known at ``w_lo``; they are carried along the low side.
    """
    def count(w, carry):
        params = ModelParams(chi=chi_n, n_per_ensemble=1, eps0=eps0, w=w)
        roots = find_roots_numeric(params, family, angle, seeds=carry, n_random=n_random,
                                   rng=np.random.default_rng(0))
        return roots.n_pairs, list(roots.roots)

    n_lo, carry = count(w_lo, list(seeds))
    n_hi, _ = count(w_hi, carry)
    if n_lo == n_hi:
        raise ValueError(f"no change in pair count on [{w_lo}, {w_hi}]")
    while w_hi - w_lo > rel_tol * max(w_hi, 1e-12):
        mid = 0.5 * (w_lo + w_hi)
        n_mid, mid_roots = count(mid, carry)
        if n_mid == n_lo:
            w_lo, carry = mid, mid_roots
        else:
            w_hi = mid
    return 0.5 * (w_lo + w_hi)


# -------------------------------------------------------------- classification

def classify_from_roots(roots: LaxRootSet, params: Optional[ModelParams] = None, angle: Optional[float] = None,
                        subphase_tol: float = SUBPHASE_TOL) -> PhaseLabel:
    """I / II / III from the pair count; III split on R_-/R_+ (IIIa: R_- > 0, |Delta| stays finite).

    Three or more pairs (quasi-periodic |Delta|) are labelled plain ``III``;
    the sub-phase split is only defined for two pairs.  ``params`` and
    ``angle`` are only recorded in the label detail.
    """
    detail = roots.as_dict()
    detail["subphase_tol"] = subphase_tol
    if params is not None:
        detail["w_over_chin"] = params.w_over_chin
        detail["eps0_over_chin"] = params.eps0_over_chin
    if angle is not None:
        detail["angle"] = angle
    if roots.undetermined:
        return PhaseLabel("undetermined", "lax", detail)
    if roots.n_pairs == 0:
        return PhaseLabel("I", "lax", detail)
    if roots.n_pairs == 1:
        return PhaseLabel("II", "lax", detail)
    if roots.n_pairs > 2:
        return PhaseLabel("III", "lax", detail)
    ratio = roots.r_ratio
    detail["r_ratio"] = ratio
    return PhaseLabel("IIIa" if ratio is not None and ratio > subphase_tol else "IIIb", "lax", detail)


def major_phase(label: str) -> str:
    return "III" if label.startswith("III") else label


# ------------------------------------------------------------ elliptic solution

@dataclass(frozen=True)
class AnalyticDelta:
    values: np.ndarray
    amplitude: float
    period_sn: float
    period_abs: float

    @property
    def omega_osc(self) -> float:
        """Angular frequency of the |Delta| fundamental (half the sn period)."""
        return 2 * math.pi / self.period_abs


def delta_analytic(t, roots: LaxRootSet, subphase_tol: float = SUBPHASE_TOL) -> AnalyticDelta:
    """``|Delta(t)| = sqrt(R+) |sn(t sqrt(R~), -R+/R~)|`` for the solvable case R_- = 0."""
    if roots.n_pairs != 2:
        raise ValueError("elliptic solution needs two complex pairs (phase III)")
    if roots.r_ratio > subphase_tol:
        raise NotImplementedError("closed-form |Delta(t)| is only available for R_- = 0")
    r_plus, r_tilde = roots.r_plus, roots.r_tilde
    if r_tilde <= 0:
        raise ValueError("degenerate root set: R~ = 0")
    m = -r_plus / r_tilde
    root_rt = math.sqrt(r_tilde)
    t = np.asarray(t, dtype=float)
    values = math.sqrt(r_plus) * np.abs(jacobi_sn(t * root_rt, m))
    period_sn = 4 * elliptic_K(m) / root_rt
    return AnalyticDelta(values=values, amplitude=math.sqrt(r_plus), period_sn=period_sn,
                         period_abs=period_sn / 2)
