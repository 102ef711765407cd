"""Special functions used by the Lax analysis.

Complete elliptic integral K(m) and Jacobi sn(u, m) are computed from the
arithmetic-geometric mean, including negative parameters through the
imaginary-modulus transformation.  The complex logarithm and inverse
hyperbolic tangent have explicitly placed branch cuts.
"""

from __future__ import annotations

import math

import numpy as np

_MAX_AGM_ITER = 64


def _agm_sequence(m: float) -> tuple[list[float], list[float]]:
    """Descending AGM sequence for 0 <= m < 1: returns (a_n, c_n)."""
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    a_seq, c_seq = [a], [c]
    for _ in range(_MAX_AGM_ITER):
        if abs(c) <= 1e-17 * a:
            break
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        a_seq.append(a)
        c_seq.append(c)
    return a_seq, c_seq


def elliptic_K(m: float) -> float:
    """Complete elliptic integral of the first kind, parameter convention K(m).

    Valid for every real ``m < 1``.  Negative parameters are mapped onto
    ``0 <= mu < 1`` with ``K(m) = K(mu) / sqrt(1 - m)``, ``mu = -m / (1 - m)``.
    """
    m = float(m)
    if not m < 1.0:
        raise ValueError(f"elliptic_K requires m < 1, got {m!r}")
    if m < 0.0:
        return elliptic_K(-m / (1.0 - m)) / math.sqrt(1.0 - m)
    a_seq, _ = _agm_sequence(m)
    return math.pi / (2.0 * a_seq[-1])


def _sncndn_unit(u: np.ndarray, m: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # 0 <= m < 1, descending Landen transformation
    if m == 0.0:
        return np.sin(u), np.cos(u), np.ones_like(u)
    quarter = elliptic_K(m)
    u = u - 4.0 * quarter * np.round(u / (4.0 * quarter))
    a_seq, c_seq = _agm_sequence(m)
    n = len(a_seq) - 1
    phi = (2.0**n) * a_seq[n] * u
    for k in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(np.clip(c_seq[k] / a_seq[k] * np.sin(phi), -1.0, 1.0)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    # dn > 0 for real u; the Landen ratio form is 0/0 at the quarter period
    dn = np.sqrt(1.0 - m * sn**2)
    return sn, cn, dn


def jacobi_sn(u, m: float):
    """Jacobi elliptic function sn(u | m) for real ``u`` and real ``m <= 1``.

    ``u`` may be a scalar or an array; the return type follows.
    """
    m = float(m)
    if m > 1.0:
        raise ValueError(f"jacobi_sn requires m <= 1, got {m!r}")
    scalar = np.ndim(u) == 0
    x = np.asarray(u, dtype=float)
    if m == 1.0:
        out = np.tanh(x)
    elif m < 0.0:
        # imaginary-modulus transformation: sn(u|m) = sd(u s | mu) / s
        s = math.sqrt(1.0 - m)
        sn, _, dn = _sncndn_unit(x * s, -m / (1.0 - m))
        out = sn / dn / s
    else:
        out = _sncndn_unit(x, m)[0]
    return float(out) if scalar else out


def complex_log(z, cut_angle: float = math.pi):
    """Complex logarithm whose branch cut runs along the ray ``arg z = cut_angle``.

    The imaginary part lies in ``(cut_angle - 2 pi, cut_angle]``; the default
    is the principal branch.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("complex_log is singular at z = 0")
    w = np.log(z)
    shift = np.where(w.imag > cut_angle, -2.0 * math.pi, 0.0)
    shift = np.where(w.imag <= cut_angle - 2.0 * math.pi, 2.0 * math.pi, shift)
    out = w + 1j * shift
    return complex(out) if out.ndim == 0 else out


def complex_atanh(z):
    """Principal inverse hyperbolic tangent.

    Branch cuts lie on the real axis for ``|Re z| >= 1``; off the cuts
    ``atanh(conj z) == conj(atanh z)``.  Raises at the poles ``z = +-1``.
    """
    z = np.asarray(z, dtype=complex)
    if np.any((z == 1.0) | (z == -1.0)):
        raise ValueError("complex_atanh has poles at z = +-1")
    out = 0.5 * (np.log1p(z) - np.log1p(-z))
    return complex(out) if out.ndim == 0 else out
