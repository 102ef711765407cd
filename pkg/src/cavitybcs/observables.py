"""Observables extracted from trajectories.

Oscillation amplitude, oscillation frequency, differential inversion,
windowed spectra with peak detection, the phase-II envelope exponent and a
trajectory-based phase label.  Time windows are given in the trajectory's
own time units.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .core import SpinState
from .dynamics import Trajectory
from .lax import PhaseLabel

MIN_SPECTRUM_SAMPLES = 16


@dataclass(frozen=True)
class Thresholds:
    """Finite-time classification bands (recorded in label metadata)."""

    tol_I: float = 0.05
    tol_II: float = 0.05
    tol_zero: float = 0.02
    steady_fraction: float = 0.25
    min_duration: float = 100.0  # in units of 1/(chi N)
    envelope_fit: bool = True


@dataclass(frozen=True)
class Peak:
    frequency: float
    height: float
    width: float


@dataclass
class SpectrumResult:
    """Hann-windowed DFT magnitude, normalised so a tone of amplitude A peaks at A.

    Real input gives the one-sided spectrum (``frequencies >= 0``); complex
    input gives the two-sided spectrum in ascending order, since positive and
    negative frequencies carry different information there.
    """

    frequencies: np.ndarray
    magnitudes: np.ndarray
    peaks: list
    window: dict = field(default_factory=dict)

    @property
    def n_peaks(self) -> int:
        return len(self.peaks)

    def dominant(self) -> Optional[Peak]:
        return self.peaks[0] if self.peaks else None


@dataclass
class TrajectoryMetrics:
    amplitude: float
    mean_abs_delta: float
    omega_osc: Optional[float]
    jz_max: float
    decay_exponent: Optional[float]
    phase: str
    thresholds: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------- basic pieces

def _window_mask(times: np.ndarray, window: Optional[Sequence[float]]) -> np.ndarray:
    if window is None:
        t0, t1 = 0.5 * (times[0] + times[-1]), times[-1]
    else:
        t0, t1 = window
    mask = (times >= t0) & (times <= t1)
    if not mask.any():
        raise ValueError(f"empty window [{t0}, {t1}] for record [{times[0]}, {times[-1]}]")
    return mask


def amplitude(traj: Trajectory, window: Optional[Sequence[float]] = None) -> float:
    """``max |Delta| - min |Delta|`` over ``window`` (default: last half of the record)."""
    vals = traj.abs_delta[_window_mask(traj.times, window)]
    return float(vals.max() - vals.min())


def _local_extrema(values: np.ndarray, kind: str) -> np.ndarray:
    sig = values if kind == "max" else -values
    idx, _ = find_peaks(sig)
    return idx


def _refined_extrema(times: np.ndarray, delta: np.ndarray, idx: np.ndarray):
    """Times and |Delta| at sampled extrema, refined by a parabola through |Delta|^2.

    |Delta| has a cusp where it touches zero, so sampled minima sit up to
    half a step's slope above the true value; |Delta|^2 is smooth there.
    Assumes uniform sampling and interior indices.
    """
    sq = np.abs(delta) ** 2
    y0, ym, yp = sq[idx], sq[idx - 1], sq[idx + 1]
    curv = ym - 2 * y0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(curv != 0, 0.5 * (ym - yp) / curv, 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    vertex = y0 - 0.25 * (ym - yp) * shift
    return times[idx] + shift * (times[1] - times[0]), np.sqrt(np.clip(vertex, 0.0, None))


def envelope_limits(traj: Trajectory, start_fraction: float = 0.25, min_points: int = 6):
    """Extrapolate the upper and lower envelopes of |Delta| to t -> infinity.

    Each envelope (successive local maxima or minima after ``start_fraction``
    of the record, refined between samples) is fitted linearly against
    ``t^{-1/2}``, the transient law of the collisionless dynamics.  Returns
    ``(upper, lower)``; ``None`` when there are too few extrema.
    """
    t, d = traj.times, traj.abs_delta
    start = t[0] + start_fraction * (t[-1] - t[0])
    out = []
    for kind in ("max", "min"):
        idx = _local_extrema(d, kind)
        idx = idx[t[idx] >= start]
        if idx.size < min_points:
            return None
        te, de = _refined_extrema(t, traj.delta, idx)
        coef = np.polyfit(1.0 / np.sqrt(te), de, 1)
        out.append(float(coef[1]))
    return out[0], max(out[1], 0.0)


def asymptotic_amplitude(traj: Trajectory, start_fraction: float = 0.25) -> Optional[float]:
    """Long-time oscillation amplitude from the extrapolated envelopes."""
    lims = envelope_limits(traj, start_fraction)
    return None if lims is None else lims[0] - lims[1]


def differential_inversion(state: SpinState) -> float:
    """``J_z = (sum_{+} sigma^z - sum_{-} sigma^z) / 2``."""
    plus = state.ensemble_tag > 0
    sz = state.sigma[:, 2]
    return 0.5 * float(sz[plus].sum() - sz[~plus].sum())


# --------------------------------------------------------------------- spectra

def spectrum(series, dt: float, rel_prominence: float = 0.05, dc_guard: int = 0,
             min_height: float = 0.0) -> SpectrumResult:
    """Windowed spectrum of a uniformly sampled series with peak detection.

    The mean is subtracted, a Hann window applied and the DFT magnitude
    divided by the window sum.  Peaks are local maxima whose prominence is at
    least ``rel_prominence`` of the largest magnitude and whose height is at
    least ``min_height``; the zero-frequency bin and ``dc_guard`` bins on
    either side are ignored (residual envelope leakage).  Frequencies are angular.
    """
    x = np.asarray(series)
    if x.ndim != 1 or x.size < MIN_SPECTRUM_SAMPLES:
        raise ValueError(f"spectrum needs a 1-d series of at least {MIN_SPECTRUM_SAMPLES} samples")
    if not dt > 0:
        raise ValueError("dt must be positive")
    is_complex = np.iscomplexobj(x)
    centred = x - x.mean()
    win = np.hanning(x.size)
    norm = win.sum()
    if is_complex:
        coeffs = np.fft.fftshift(np.fft.fft(centred * win))
        freqs = np.fft.fftshift(np.fft.fftfreq(x.size, dt)) * 2 * math.pi
    else:
        coeffs = np.fft.rfft(centred * win)
        freqs = np.fft.rfftfreq(x.size, dt) * 2 * math.pi
    mags = np.abs(coeffs) / norm
    step = 2 * math.pi / (x.size * dt)

    peaks: list[Peak] = []
    top = mags.max()
    if top > 0:
        # pad so that maxima at the array edges are detectable
        padded = np.concatenate([[0.0], mags, [0.0]])
        idx, props = find_peaks(padded, prominence=rel_prominence * top, height=min_height)
        idx = idx - 1
        if idx.size:
            widths = peak_widths(padded, idx + 1, rel_height=0.5)[0] * step
            for i, wdt in zip(idx, widths):
                if abs(freqs[i]) < (dc_guard + 0.5) * step:
                    continue
                peaks.append(Peak(float(freqs[i]), float(mags[i]), float(wdt)))
    peaks.sort(key=lambda p: -p.height)
    meta = {
        "window": "hann", "n": int(x.size), "dt": dt, "window_sum": float(norm),
        "window_energy": float(np.sum(np.abs(centred * win) ** 2)),
        "resolution": step, "two_sided": bool(is_complex), "rel_prominence": rel_prominence,
        "dc_guard": dc_guard, "min_height": min_height,
    }
    return SpectrumResult(freqs, mags, peaks, meta)


def parseval_ratio(result: SpectrumResult) -> float:
    """Windowed energy recovered from the magnitudes divided by the direct sum (should be 1)."""
    meta = result.window
    n, s = meta["n"], meta["window_sum"]
    mags2 = result.magnitudes**2
    if meta["two_sided"]:
        total = mags2.sum()
    else:
        total = mags2[0] + 2 * mags2[1:].sum()
        if n % 2 == 0:
            total -= mags2[-1]
    energy = meta["window_energy"]
    recovered = s * s * total / n
    return float(recovered / energy) if energy > 0 else 1.0


def extract_omega_osc(traj: Trajectory, window: Optional[Sequence[float]] = None, signal: str = "abs_delta",
                      rel_prominence: float = 0.05, min_rel_height: float = 1e-3) -> Optional[float]:
    """Angular frequency of the |Delta| fundamental (or of ``|a|^2`` with ``signal="abs_a_sq"``).

    Uses the dominant spectral peak in the window (default last half).  Returns
    ``None`` when no peak reaches ``min_rel_height`` times the mean signal.
    """
    mask = _window_mask(traj.times, window)
    values = traj.abs_delta if signal == "abs_delta" else np.asarray(traj.extras[signal])
    seg = values[mask]
    res = spectrum(seg, traj.dt, rel_prominence=rel_prominence,
                   min_height=min_rel_height * float(np.mean(np.abs(seg))))
    peak = res.dominant()
    return None if peak is None else abs(peak.frequency)


def phase2_decay_exponent(traj: Trajectory, start_fraction: float = 0.05, min_points: int = 8) -> Optional[float]:
    """Log-log slope of the |Delta| oscillation envelope ``(max_k - min_k)/2`` against time."""
    t, d = traj.times, traj.abs_delta
    imax, imin = _local_extrema(d, "max"), _local_extrema(d, "min")
    start = t[0] + start_fraction * (t[-1] - t[0])
    imax, imin = imax[t[imax] >= start], imin[t[imin] >= start]
    if imax.size < min_points or imin.size < min_points:
        return None
    # envelope half-width at each maximum, using the interpolated lower envelope
    lower = np.interp(t[imax], t[imin], d[imin])
    half = 0.5 * (d[imax] - lower)
    good = half > 0
    if good.sum() < min_points:
        return None
    slope, _ = np.polyfit(np.log(t[imax][good]), np.log(half[good]), 1)
    return float(slope)


# -------------------------------------------------------------- classification

def reference_scale(traj: Trajectory) -> float:
    """Largest |Delta| over the whole record, the scale phase I is judged against."""
    return float(traj.abs_delta.max())


def classify_trajectory(traj: Trajectory, thresholds: Thresholds = Thresholds(),
                        reference: Optional[float] = None) -> PhaseLabel:
    """Label from the steady window (last quarter by default).

    mean |Delta| below ``tol_I`` of the reference is I; otherwise a relative
    oscillation amplitude below ``tol_II`` is II; otherwise III, refined to
    IIIb when min |Delta| drops below ``tol_zero`` of max |Delta|.  With
    ``thresholds.envelope_fit`` the oscillation amplitude is the envelope
    extrapolated to late times, so decaying phase-II transients do not count
    as persistent oscillations.
    """
    t = traj.times
    chi_n = traj.meta.get("chi_n") or traj.meta.get("chi", 0) * traj.meta.get("n_per_ensemble", 0)
    duration = (t[-1] - t[0]) * chi_n if chi_n else None
    if duration is not None and duration < thresholds.min_duration * (1 - 1e-9):
        raise ValueError(f"record of {duration:.3g}/(chi N) shorter than {thresholds.min_duration}/(chi N)")
    start = t[-1] - thresholds.steady_fraction * (t[-1] - t[0])
    seg = traj.abs_delta[t >= start]
    if seg.size < 4:
        raise ValueError("steady window too short")
    ref = reference_scale(traj) if reference is None else reference
    mean = float(seg.mean())
    amp = float(seg.max() - seg.min())
    osc = amp
    if thresholds.envelope_fit:
        lims = envelope_limits(traj, start_fraction=1.0 - 3 * thresholds.steady_fraction)
        if lims is not None:
            osc = max(lims[0] - lims[1], 0.0)
    detail = {"mean_abs_delta": mean, "amplitude": amp, "oscillation": osc, "reference": ref,
              "min_abs_delta": float(seg.min()), "max_abs_delta": float(seg.max()),
              "thresholds": asdict(thresholds)}
    if mean < thresholds.tol_I * ref:
        phase = "I"
    elif osc < thresholds.tol_II * mean:
        phase = "II"
    elif seg.min() < thresholds.tol_zero * seg.max():
        phase = "IIIb"
    else:
        phase = "IIIa"
    return PhaseLabel(phase, "trajectory", detail)


def trajectory_metrics(traj: Trajectory, thresholds: Thresholds = Thresholds()) -> TrajectoryMetrics:
    label = classify_trajectory(traj, thresholds)
    decay = phase2_decay_exponent(traj) if label.phase == "II" else None
    seg = traj.abs_delta[_window_mask(traj.times, None)]
    return TrajectoryMetrics(
        amplitude=amplitude(traj), mean_abs_delta=float(seg.mean()),
        omega_osc=extract_omega_osc(traj), jz_max=float(np.max(np.abs(traj.jz))),
        decay_exponent=decay, phase=label.phase, thresholds=asdict(thresholds),
    )


# -------------------------------------------------------------- cavity spectra

def field_spectrum(traj: Trajectory, window: Optional[Sequence[float]] = None,
                   rel_prominence: float = 0.1, dc_guard: int = 0) -> SpectrumResult:
    """Spectrum of the complex intracavity field ``a(t)`` over ``window`` (default last half)."""
    if "re_a" not in traj.extras:
        raise ValueError("trajectory has no intracavity field columns")
    a = np.asarray(traj.extras["re_a"]) + 1j * np.asarray(traj.extras["im_a"])
    mask = _window_mask(traj.times, window)
    return spectrum(a[mask], traj.dt, rel_prominence=rel_prominence, dc_guard=dc_guard)


def count_robust_peaks(result: SpectrumResult, dominance: float = 3.0, floor: float = 0.0) -> int:
    """Number of spectral lines that stand out of the spectral clutter.

    The dominant line counts when it exceeds ``floor`` and is at least
    ``dominance`` times the largest magnitude outside the two strongest
    lines' half-widths (and the DC guard); further lines count when they pass the detector's own
    relative-prominence test.
    """
    if not result.peaks:
        return 0
    top = result.peaks[0]
    if top.height <= floor:
        return 0
    freqs, mags = result.frequencies, result.magnitudes
    clutter = np.ones_like(mags, dtype=bool)
    for p in result.peaks[:2]:
        clutter &= np.abs(freqs - p.frequency) > max(p.width, 2 * result.window["resolution"])
    guard = (result.window["dc_guard"] + 0.5) * result.window["resolution"]
    clutter &= np.abs(freqs) >= guard
    background = mags[clutter].max() if clutter.any() else 0.0
    if top.height < dominance * background:
        return 0
    return len(result.peaks)
