import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magwell import kernels
from magwell.fieldlab import build_potential, darboux_chart, field_minimum, make_field
from magwell.starbirk.birkhoff import (
    NormalFormError,
    birkhoff,
    build_transform,
    eigenvalue_expansion,
    expand_star,
    normal_form,
    reorder_star_powers,
    series_from_hamiltonian,
)
from magwell.starbirk.series import FormalSeries, ad_action, series_shape, to_complex
from magwell.starbirk.transform import BaseMap, symplectic_defect


def fast(terms, N1=6, N2=0):
    return FormalSeries.from_terms({(a, b, l, 0, 0): v for (a, b, l), v in terms.items()}, N1, N2)


@pytest.fixture(scope="module")
def fig2_nf():
    F = make_field("fig2")
    return F, normal_form(F, 8, 6)


# --- series extraction --------------------------------------------------------


def test_constant_series_is_action():
    s = series_from_hamiltonian(make_field(1.0), 6, 4)
    want = FormalSeries.action(6, 4, s.basepoint)
    np.testing.assert_allclose(s.coeffs, want.coeffs, atol=1e-12)


@pytest.mark.parametrize("name", ["fig2", "quadratic", "ridge"])
def test_quadratic_part_is_B(name):
    F = make_field(name)
    ch = darboux_chart(F)
    bp = ch.forward(np.array([0.3, -0.2]))
    s = series_from_hamiltonian(F, 6, 4, basepoint=bp)
    b = F(ch.inverse(bp))
    assert s.coeffs[2, 0, 0, 0, 0].real == pytest.approx(b, rel=1e-10)
    assert s.coeffs[0, 2, 0, 0, 0].real == pytest.approx(b, rel=1e-10)
    assert abs(s.coeffs[1, 1, 0, 0, 0]) < 1e-10
    for a, bb in [(0, 0), (1, 0), (0, 1)]:
        assert not np.any(s.coeffs[a, bb])


def test_cubic_coefficients_match_ray_fits():
    # independent jet: polynomial fit of H o phi0 along four rays in the fast plane
    F = make_field("fig2")
    base = BaseMap(F, build_potential(F))
    bp = darboux_chart(F).forward(np.array([0.4, 0.1]))
    s = series_from_hamiltonian(F, 6, 3, basepoint=bp, base=base)
    t = 0.08 * np.cos(np.pi * (np.arange(41) + 0.5) / 41)
    angles = np.array([0.1, 0.7, 1.3, 2.2])
    rows, rhs = [], []
    for th in angles:
        c, sn = np.cos(th), np.sin(th)
        z = np.zeros((t.size, 4))
        z[:, 0], z[:, 1], z[:, 2:] = t * c, t * sn, bp
        fit = np.polynomial.polynomial.polyfit(t, base.hamiltonian(z), 10)
        rows.append([c**3, c**2 * sn, c * sn**2, sn**3])
        rhs.append(fit[3])
    c30, c21, c12, c03 = np.linalg.solve(np.array(rows), np.array(rhs))
    got = s.coeffs[:, :, 0, 0, 0].real
    np.testing.assert_allclose([got[3, 0], got[2, 1], got[1, 2], got[0, 3]], [c30, c21, c12, c03], atol=1e-7)


# --- Moyal / ad ---------------------------------------------------------------


def test_ad_action_of_action_is_poisson():
    I = FormalSeries.action(6, 0)
    x3 = fast({(3, 0, 0): 1.0})
    np.testing.assert_allclose(ad_action(I, x3).coeffs, I.poisson(x3).coeffs, atol=1e-14)


def test_ad_action_of_action_is_poisson_random():
    rng = np.random.default_rng(8)
    m = kernels.graded_mask(8, 4)
    a = FormalSeries(rng.normal(size=series_shape(8, 4)) * m, 8, 4)
    I = FormalSeries.action(8, 4)
    np.testing.assert_allclose(I.ad(a).coeffs, I.poisson(a).coeffs, atol=1e-12)


def test_ad_self_vanishes():
    rng = np.random.default_rng(9)
    m = kernels.graded_mask(6, 3)
    a = FormalSeries((rng.normal(size=series_shape(6, 3)) + 1j * rng.normal(size=series_shape(6, 3))) * m, 6, 3)
    assert a.ad(a).max_abs() < 1e-12


def _random_cubic(seed):
    rng = np.random.default_rng(seed)
    terms = {}
    for a in range(4):
        for b in range(4 - a):
            terms[(a, b, 0, 0, 0)] = rng.normal()
    terms[(1, 0, 0, 1, 0)] = rng.normal()
    terms[(0, 1, 0, 0, 1)] = rng.normal()
    return FormalSeries.from_terms(terms, 9, 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_jacobi_on_cubics(seed):
    a, b, c = (_random_cubic(seed + k) for k in range(3))
    j = a.ad(b.ad(c)) + b.ad(c.ad(a)) + c.ad(a.ad(b))
    assert j.max_abs() < 1e-10


# --- normal form --------------------------------------------------------------


def test_unperturbed_input():
    h0 = FormalSeries.action(8, 4).slow_mul(np.array([[2.0]]))
    nf = birkhoff(h0)
    assert nf.tau.is_zero() and nf.kappa.is_zero()


def test_cubic_perturbation_oracle():
    # H = B |z1|^2 + r x1^3: classical averaging gives K = B I + k I^2 with
    # k = -15 r^2 / (32 B) (frequency shift of the quadratic-force oscillator)
    B, r = 1.3, 0.3
    H = fast({(2, 0, 0): B, (0, 2, 0): B, (3, 0, 0): r}, N1=6, N2=0)
    nf = birkhoff(H)
    k = -15 * r**2 / (32 * B)
    kc = nf.kappa.coeffs[:, :, 0, 0, 0].real
    assert kc[4, 0] == pytest.approx(k, rel=1e-12)
    assert kc[2, 2] == pytest.approx(2 * k, rel=1e-12)
    assert kc[0, 4] == pytest.approx(k, rel=1e-12)
    assert abs(kc[3, 1]) < 1e-14 and abs(kc[1, 3]) < 1e-14
    assert not np.any(nf.kappa.degree_part(3).coeffs)


def test_kappa_commutes_constant_field():
    nf = normal_form(make_field(1.5), 8, 4, basepoint=(0.0, 0.0), with_eig=False)
    assert nf.kappa.ad(nf.h0).max_abs() == 0.0


def test_cubic_kappa_commutes_with_h0():
    H = fast({(2, 0, 0): 1.0, (0, 2, 0): 1.0, (3, 0, 0): 0.2, (1, 2, 0): -0.4, (2, 2, 0): 0.1}, N1=8)
    nf = birkhoff(H)
    assert nf.kappa.ad(nf.h0).max_abs() < 1e-13


def test_fig2_kappa_resonant(fig2_nf):
    _, nf = fig2_nf
    w = to_complex(nf.kappa)
    a, b = np.nonzero(np.any(np.abs(w) > 1e-12, axis=(2, 3, 4)))
    assert np.all(a == b)
    assert nf.kappa.min_degree() >= 3
    I = FormalSeries.action(8, 6, nf.basepoint)
    assert nf.kappa.star(I).coeffs == pytest.approx(I.star(nf.kappa).coeffs, abs=1e-12)
    for v in nf.diagnostics["nonresonant_residual"].values():
        assert v < 1e-10


def test_zero_divisor():
    with pytest.raises(NormalFormError):
        birkhoff(fast({(3, 0, 0): 1.0}))
    with pytest.raises(NormalFormError):
        birkhoff(fast({(1, 0, 0): 1.0, (2, 0, 0): 1.0, (0, 2, 0): 1.0}))


def test_degree_two_checked():
    with pytest.raises(NormalFormError):
        birkhoff(fast({(2, 0, 0): 1.0, (0, 2, 0): 2.0}))


# --- star reordering ----------------------------------------------------------


def test_reorder_action_square():
    k = FormalSeries.from_terms({(4, 0, 0, 0, 0): 1, (0, 4, 0, 0, 0): 1, (2, 2, 0, 0, 0): 2}, 8, 2)
    star, plain, f = reorder_star_powers(k)
    assert star[(0, 2)][0, 0] == pytest.approx(1.0)
    assert star[(2, 0)][0, 0] == pytest.approx(1.0)
    assert set(star) == {(0, 2), (2, 0)}


def test_reorder_zero():
    star, plain, f = reorder_star_powers(FormalSeries.zero(6, 2))
    assert star == {} and plain == {} and not np.any(f)


def test_reorder_roundtrip(fig2_nf):
    _, nf = fig2_nf
    back = expand_star(nf.star_coeffs, 8, 6, nf.basepoint)
    np.testing.assert_allclose(back.coeffs, nf.kappa.coeffs, atol=1e-12 * (1 + nf.kappa.max_abs()))


def test_f_linear_part_is_B(fig2_nf):
    F, nf = fig2_nf
    ch = darboux_chart(F)
    for ds in ([0.01, 0.0], [0.0, -0.02], [0.015, 0.01]):
        z2 = nf.basepoint + np.array(ds)
        want = F(ch.inverse(z2))
        assert nf.f_eval(ds[0], ds[1], 0.0) == pytest.approx(want, abs=1e-9)


# --- eigenvalue coefficients --------------------------------------------------


def test_eig_coeffs_fig2(fig2_nf):
    F, nf = fig2_nf
    bmin, c0, c1 = eigenvalue_expansion(nf, F)
    assert bmin == pytest.approx(2.0, abs=1e-12)
    assert c1 == pytest.approx(0.5, abs=1e-10)
    qmin, _ = field_minimum(F)
    np.testing.assert_allclose(qmin, [0.0, 0.0], atol=1e-8)


def test_eig_coeffs_quadratic():
    F = make_field({"kind": "polynomial", "coefficients": {(0, 0): 2.0, (2, 0): 1.0, (0, 2): 1.0}})
    nf = normal_form(F, 6, 4)
    assert nf.eig_coeffs[2] == pytest.approx(0.5, abs=1e-10)
    assert nf.eig_coeffs[0] == pytest.approx(2.0, abs=1e-12)


def test_eig_coeffs_constant_degenerate():
    F = make_field(1.0)
    nf = normal_form(F, 6, 4, basepoint=(0.0, 0.0))
    assert nf.eig_coeffs is None
    with pytest.raises(NormalFormError):
        eigenvalue_expansion(nf, F)


# --- transform ----------------------------------------------------------------


def test_order_two_maps_zero_section_to_sigma(fig2_nf):
    F, nf = fig2_nf
    tr = build_transform(F, nf, 2)
    rng = np.random.default_rng(10)
    z = np.zeros((20, 4))
    z[:, 2:] = nf.basepoint + rng.uniform(-0.5, 0.5, size=(20, 2))
    m = tr.forward(z)
    A = build_potential(F)
    v = m[:, 2:] - A.eval(m[:, :2])
    assert np.max(np.abs(v)) < 1e-12


def test_constant_transform_exact():
    F = make_field(1.0)
    nf = normal_form(F, 6, 4, basepoint=(0.1, 0.2), with_eig=False)
    tr = build_transform(F, nf, 6)
    rng = np.random.default_rng(11)
    z = rng.uniform(-0.3, 0.3, size=(30, 4))
    np.testing.assert_allclose(tr.hamiltonian(z), z[:, 0] ** 2 + z[:, 1] ** 2, atol=1e-13)


@pytest.mark.parametrize("order", [2, 3, 4, 6])
def test_transform_roundtrip_and_symplectic(fig2_nf, order):
    F, nf = fig2_nf
    tr = build_transform(F, nf, order)
    rng = np.random.default_rng(order)
    z = np.empty((50, 4))
    r = 0.3 * np.sqrt(rng.uniform(size=50))
    th = rng.uniform(0, 2 * np.pi, size=50)
    z[:, 0], z[:, 1] = r * np.cos(th), r * np.sin(th)
    z[:, 2:] = nf.basepoint + rng.uniform(-0.2, 0.2, size=(50, 2))
    assert np.max(np.abs(tr.inverse(tr.forward(z)) - z)) < 1e-8
    assert symplectic_defect(tr.forward, z[:, :] * [0.3, 0.3, 1, 1]) < 1e-6


def test_order_exceeds(fig2_nf):
    F, nf = fig2_nf
    with pytest.raises(NormalFormError):
        build_transform(F, nf, 9)


def test_residual_order_fig2(fig2_nf):
    from magwell.benchcli.criteria import loglog_slope, residual_decay

    F, nf = fig2_nf
    for N in (2, 3, 4):
        radii, res, _ = residual_decay(F, nf, N)
        assert loglog_slope(radii, res) >= N + 0.7
