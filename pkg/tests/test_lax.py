import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavitybcs.core import InitialStateSpec, ModelParams, SplittingSpec, prepare_initial_state, sample_splittings
from cavitybcs.lax import (
    IMAG_TOL,
    LaxRootSet,
    analytic_roots_antipodal,
    analytic_roots_smallEps,
    analytic_roots_smallW,
    classify_from_roots,
    critical_splitting,
    delta_analytic,
    find_roots_numeric,
    lax_components_continuum,
    lax_squared,
    lax_vector_discrete,
    locate_w_boundary,
    major_phase,
    scan_roots_w,
)


def params(w, eps0, chi_n=1.0):
    return ModelParams(chi=chi_n, n_per_ensemble=1, eps0=eps0, w=w)


def discrete_state(w, eps0, n, angle, family="azimuthal"):
    p = ModelParams.dimensionless(w, eps0, n)
    eps = sample_splittings(SplittingSpec.from_params(p))
    return p, prepare_initial_state(InitialStateSpec(family, angle), eps)


def discrete_root(u0, state, p, steps=40):
    """Secant iteration on the discrete Q(u); independent of the continuum formulas."""
    def q(u):
        vec = lax_vector_discrete([u], state.sigma, state.eps, p.chi, p.sign)[0]
        return complex(np.sum(vec * vec))

    a, b = complex(u0), complex(u0) * (1 + 1e-4)
    fa, fb = q(a), q(b)
    for _ in range(steps):
        if fb == fa:
            break
        a, b = b, b - fb * (b - a) / (fb - fa)
        fa, fb = fb, q(b)
    return b


# -- continuum components ---------------------------------------------------------

def test_antipodal_x_component_vanishes():
    p = params(0.7, 0.1)
    u = np.array([0.3 + 0.2j, -1.0 + 0.05j, 2.0j])
    lx, ly, lz = lax_components_continuum(u, p, angle=math.pi)
    np.testing.assert_allclose(lx, 0.0, atol=1e-15)
    assert np.all(np.abs(ly) > 0)


def test_q_tends_to_one_far_away():
    p = params(1.3, 0.2)
    for u in (1e6, 1e6j, -3e5 + 4e5j):
        assert abs(lax_squared(u, p, angle=1.0) - 1.0) < 1e-5


def test_branch_cut_rejected():
    p = params(1.0, 0.2)
    with pytest.raises(ValueError):
        lax_squared(0.1 + 0.0j, p)
    with pytest.raises(ValueError):
        lax_squared(0.35, p)  # support edge 0.1 + 0.25
    assert np.isfinite(lax_squared(0.36, p))
    with pytest.raises(ValueError):
        lax_components_continuum(0.1j, p, family="polar")


@pytest.mark.parametrize("family", ["azimuthal", "elevation"])
def test_continuum_matches_discrete_sum(family):
    w, eps0, angle = 1.2, 0.3, 1.1
    p, s = discrete_state(w, eps0, 5000, angle, family)
    rng = np.random.default_rng(7)
    u = rng.uniform(-1.5, 1.5, 20) + 1j * rng.uniform(0.05, 1.0, 20) * rng.choice([-1, 1], 20)
    disc = lax_vector_discrete(u, s.sigma, s.eps, p.chi, p.sign)
    cont = np.stack(lax_components_continuum(u, p, family, angle), axis=1)
    rel = np.linalg.norm(disc - cont, axis=1) / np.linalg.norm(cont, axis=1)
    assert rel.max() < 1e-3


def test_small_width_expansion_is_second_order():
    eps0, angle = 0.4, 0.8
    u = np.array([0.5 + 0.3j, -0.2 + 0.6j, 1.1j])
    q0 = lax_squared(u, params(0.0, eps0), angle=angle)
    # W = 0 closed form: both ensembles collapse onto their centres
    x_p, x_m = 0.5 / (u - eps0 / 2), 0.5 / (u + eps0 / 2)
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    np.testing.assert_allclose(q0, (c * (x_p + x_m)) ** 2 + (s * (x_p - x_m)) ** 2 + 1, rtol=1e-14)
    d1 = np.abs(lax_squared(u, params(0.02, eps0), angle=angle) - q0)
    d2 = np.abs(lax_squared(u, params(0.01, eps0), angle=angle) - q0)
    np.testing.assert_allclose(d1 / d2, 4.0, rtol=0.01)


# -- closed-form roots ---------------------------------------------------------------

@pytest.mark.parametrize("w", [0.1, 0.5, 1.5, 3.0])
def test_antipodal_roots_are_roots(w):
    p = params(w, 0.1)
    roots = analytic_roots_antipodal(p)
    assert roots.n_pairs == 2
    for u in roots.roots:
        assert abs(lax_squared(u, p, angle=math.pi)) < 1e-8
    # |u1i| = |u2i|, so the antipodal quench sits in IIIb
    assert roots.r_minus == pytest.approx(0.0, abs=1e-20)
    assert classify_from_roots(roots).phase == "IIIb"


@pytest.mark.parametrize("w", [math.pi, 3.5, 10.0])
def test_antipodal_roots_vanish_beyond_pi(w):
    assert analytic_roots_antipodal(params(w, 0.1)).n_pairs == 0
    assert classify_from_roots(analytic_roots_antipodal(params(w, 0.1))).phase == "I"


def test_antipodal_example_against_newton():
    p = params(0.5, 0.1)
    closed = analytic_roots_antipodal(p)
    numeric = find_roots_numeric(p, angle=math.pi)
    assert numeric.n_pairs == 2
    for a, b in zip(closed.roots, numeric.roots):
        assert abs(a - b) < 1e-10


def test_antipodal_small_width_limit():
    small = analytic_roots_smallW(params(1e-7, 0.1), angle=math.pi)
    closed = analytic_roots_antipodal(params(1e-7, 0.1))
    for a, b in zip(small.roots, closed.roots):
        assert abs(a - b) < 1e-6


def test_small_width_flat_band_roots_are_imaginary():
    roots = analytic_roots_smallW(params(0.0, 0.0), angle=0.0)
    # W = 0, eps0 = 0, aligned: Q = 1 + (chi N / u)^2, a single pair at i chi N
    assert roots.n_pairs == 1
    for u in roots.roots:
        assert abs(u.real) < 1e-12
        assert u.imag == pytest.approx(1.0)


@pytest.mark.parametrize("angle", [0.0, math.pi / 3, math.pi / 2, 0.8 * math.pi])
def test_small_width_roots_are_exact_at_zero_width(angle):
    p = params(0.0, 0.15)
    roots = analytic_roots_smallW(p, angle=angle)
    assert roots.n_pairs == 2
    for u in roots.roots:
        assert abs(lax_squared(u, p, angle=angle)) < 1e-10


@pytest.mark.parametrize("angle", [0.0, math.pi / 2, 3 * math.pi / 4])
def test_critical_splitting_closes_the_gap_between_pairs(angle):
    eps_c = critical_splitting(1.0, angle)
    roots = analytic_roots_smallW(params(0.0, eps_c), angle=angle)
    assert roots.n_pairs == 2
    assert roots.r_ratio < 1e-12
    assert analytic_roots_smallW(params(0.0, 0.9 * eps_c), angle=angle).r_ratio > 1e-3


def test_critical_splitting_values():
    assert critical_splitting(1.0, 0.0) == pytest.approx(1.0)
    assert critical_splitting(1.0, math.pi) == pytest.approx(0.0, abs=1e-15)
    assert critical_splitting(2.0, math.pi / 2) == pytest.approx(1.0)


@pytest.mark.parametrize("eps0", [0.1, 0.5])
def test_elevation_small_width_imaginary_parts(eps0):
    angle = math.pi / 2
    p = params(0.0, eps0)
    roots = analytic_roots_smallW(p, family="elevation", angle=angle)
    assert roots.n_pairs == 2
    for u in roots.roots:
        assert abs(lax_squared(u, p, family="elevation", angle=angle)) < 1e-10
    centre = 0.5 * math.cos(angle / 2)
    # the pairs straddle i (chi N / 2) cos(angle/2); with a real radicand both sit on it
    assert np.mean([u.imag for u in roots.roots]) == pytest.approx(centre, rel=1e-12)
    if eps0 == 0.5:
        for u in roots.roots:
            assert u.imag == pytest.approx(centre, rel=1e-12)


def test_elevation_rejects_trivial_angle():
    with pytest.raises(ValueError):
        analytic_roots_smallW(params(0.0, 0.1), family="elevation", angle=math.pi)


def test_double_pair_keeps_multiplicity():
    roots = analytic_roots_smallW(params(0.0, critical_splitting(1.0, 0.0)), angle=0.0)
    assert roots.n_pairs == 2
    assert roots.roots[0] == pytest.approx(roots.roots[1])
    assert classify_from_roots(roots).phase == "IIIb"


def test_small_splitting_root_example():
    p = params(1.0, 0.0)
    roots = analytic_roots_smallEps(p, angle=0.0)
    assert roots.n_pairs == 1
    assert roots.roots[0] == pytest.approx(0.25j / math.tan(0.25), rel=1e-14)
    assert abs(lax_squared(roots.roots[0], p, angle=0.0)) < 1e-10


def test_small_splitting_boundary_is_exclusive():
    angle = math.pi / 3
    b = 2 * math.pi * math.cos(angle / 2)
    assert analytic_roots_smallEps(params(b, 0.0), angle=angle).n_pairs == 0
    assert analytic_roots_smallEps(params(0.999 * b, 0.0), angle=angle).n_pairs == 1
    assert analytic_roots_smallEps(params(1e-3, 0.0), angle=math.pi).n_pairs == 0


@pytest.mark.parametrize("angle", [0.0, 1.0, 2.0])
def test_small_splitting_root_against_newton(angle):
    p = params(1.5, 1e-9)
    closed = analytic_roots_smallEps(p, angle=angle).roots[0]
    numeric = find_roots_numeric(p, angle=angle)
    assert numeric.n_pairs == 1
    assert abs(numeric.roots[0] - closed) < 1e-7


def test_amplitude_limit_small_width_small_splitting():
    eps0 = 0.01
    roots = analytic_roots_antipodal(params(1e-4, eps0))
    amp = delta_analytic([0.0], roots).amplitude
    assert amp == pytest.approx(math.sqrt(eps0), rel=0.01)


# -- numerical search ------------------------------------------------------------------

def test_antipodal_scan_tracks_closed_form():
    ws = np.linspace(0.05, 4.0, 80)
    for w, found in zip(ws, scan_roots_w(ws, 0.1, angle=math.pi)):
        closed = analytic_roots_antipodal(params(w, 0.1))
        assert found.n_pairs == closed.n_pairs
        for a, b in zip(found.roots, closed.roots):
            assert abs(a - b) / abs(b) < 1e-6


def test_aligned_scan_switches_at_twice_the_splitting():
    eps0 = 0.1
    ws = np.linspace(0.01, 0.4, 40)
    counts = np.array([r.n_pairs for r in scan_roots_w(ws, eps0, angle=0.0)])
    assert set(counts) == {1, 2}
    switch = ws[np.argmax(counts == 1)]
    assert abs(switch - 2 * eps0) <= ws[1] - ws[0]


@pytest.mark.parametrize("angle", [0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4])
def test_normal_boundary_tracks_closed_form(angle):
    b = 2 * math.pi * math.cos(angle / 2)
    w_c = locate_w_boundary(0.9 * b, 1.1 * b, 0.01, angle=angle)
    assert w_c == pytest.approx(b, rel=0.02)


def test_locate_boundary_needs_a_change():
    with pytest.raises(ValueError):
        locate_w_boundary(0.1, 0.2, 0.01, angle=0.0)


def test_three_pairs_are_genuine_and_labelled_iii():
    p = params(1.0, 0.1)
    angle = 0.7 * math.pi
    roots = find_roots_numeric(p, angle=angle)
    assert roots.n_pairs == 3
    assert not roots.undetermined
    # each continuum root has a partner of the discrete Q at 2N = 10^4
    pd, s = discrete_state(1.0, 0.1, 5000, angle)
    for u in roots.roots:
        assert abs(discrete_root(u, s, pd) - u) < 1e-3
    assert classify_from_roots(roots).phase == "III"


def test_scan_is_deterministic():
    ws = [0.2, 0.6, 1.0]
    a = scan_roots_w(ws, 0.1, angle=1.0, seed=3)
    b = scan_roots_w(ws, 0.1, angle=1.0, seed=3)
    assert [r.roots for r in a] == [r.roots for r in b]


@settings(max_examples=25)
@given(w=st.floats(0.01, 6.0), eps0=st.floats(0.0, 1.0), angle=st.floats(0.0, math.pi),
       family=st.sampled_from(["azimuthal", "elevation"]))
def test_reported_roots_are_roots(w, eps0, angle, family):
    if family == "elevation" and angle > math.pi - 1e-6:
        angle = math.pi - 1e-6
    p = params(w, eps0)
    roots = find_roots_numeric(p, family=family, angle=angle, n_random=8)
    if roots.undetermined:
        assert roots.reason
        return
    for u in roots.roots:
        assert u.imag >= IMAG_TOL
        assert abs(lax_squared(u, p, family, angle)) < 1e-8
        # conjugate closure
        assert abs(lax_squared(u.conjugate(), p, family, angle)) < 1e-8
    if roots.n_pairs == 2:
        assert roots.r_minus >= 0
        assert roots.r_plus >= roots.r_minus


# -- classification -------------------------------------------------------------------------

def test_classification_by_pair_count():
    assert classify_from_roots(LaxRootSet()).phase == "I"
    assert classify_from_roots(LaxRootSet(roots=(0.5j,))).phase == "II"
    assert classify_from_roots(LaxRootSet(roots=(0.1 + 0.5j, 0.3 + 0.2j, -0.4 + 0.1j))).phase == "III"
    assert classify_from_roots(LaxRootSet(undetermined=True, reason="x")).phase == "undetermined"
    assert major_phase("IIIa") == "III" and major_phase("II") == "II"


def test_aligned_small_width_is_iiia():
    label = classify_from_roots(analytic_roots_smallW(params(1e-3, 0.5), angle=0.0), params(1e-3, 0.5), 0.0)
    assert label.phase == "IIIa"
    assert label.provenance == "lax"
    assert label.detail["angle"] == 0.0


@settings(max_examples=30)
# the smaller pair has Im u ~ eps0^2 / 4, below the real-root tolerance for eps0 < 2e-3
@given(eps0=st.floats(1e-2, 1.5), angle=st.floats(0.0, math.pi))
def test_small_width_is_always_phase_iii(eps0, angle):
    roots = analytic_roots_smallW(params(0.0, eps0), angle=angle)
    assert roots.n_pairs == 2
    assert classify_from_roots(roots).phase in ("IIIa", "IIIb")


# -- elliptic solution ----------------------------------------------------------------------

def test_elliptic_solution_basics():
    roots = analytic_roots_antipodal(params(0.5, 0.1))
    res = delta_analytic(np.array([0.0]), roots)
    assert res.values[0] == 0.0
    assert res.amplitude == pytest.approx(math.sqrt(roots.r_plus))
    assert res.period_abs == pytest.approx(res.period_sn / 2)
    t = np.linspace(0, 3 * res.period_sn, 3001)
    vals = delta_analytic(t, roots).values
    assert vals.max() == pytest.approx(res.amplitude, rel=1e-5)
    np.testing.assert_allclose(delta_analytic(t + res.period_abs, roots).values, vals, atol=1e-10)


def test_elliptic_solution_errors():
    with pytest.raises(ValueError):
        delta_analytic([0.0], LaxRootSet(roots=(0.5j,)))
    with pytest.raises(NotImplementedError):
        delta_analytic([0.0], analytic_roots_smallW(params(1e-3, 0.5), angle=0.0))


def test_oscillation_frequency_scales_as_square_root():
    eps = np.geomspace(1e-3, 1e-1, 5)
    omega = [delta_analytic([0.0], analytic_roots_antipodal(params(1e-6, e))).omega_osc for e in eps]
    slope = np.polyfit(np.log(eps), np.log(omega), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.02)
