import numpy as np
import pytest

from magwell.fieldlab import build_potential, darboux_chart, make_field
from magwell.specwell import (
    AliasingError,
    BoxTooSmall,
    SpectralResult,
    assemble_magnetic_laplacian,
    counting_function,
    dense_eigenvalues,
    gap_statistics,
    localization_profile,
    lowest_eigenpairs,
    phase_volume,
    richardson,
    solve_with_estimate,
    weyl_quantize_1d,
    well_box,
)

BOX = ((-1.0, 1.0), (-1.0, 1.0))


def const_op(B0, hbar, n, box=BOX, gauge="landau_x", **kw):
    F = make_field(B0)
    return assemble_magnetic_laplacian(F, build_potential(F, gauge), hbar, box, n, **kw)


def test_free_laplacian():
    hbar, n, L = 0.1, 128, 2.0
    op = const_op(1.0, hbar, n, phases=False)
    lam = lowest_eigenpairs(op, 1).eigenvalues[0]
    h = L / (n + 1)
    exact_discrete = 2 * (hbar / h) ** 2 * 2 * (1 - np.cos(np.pi * h / L))
    assert lam == pytest.approx(exact_discrete, rel=1e-10)
    assert lam == pytest.approx(hbar**2 * 2 * np.pi**2 / L**2, rel=1e-4)


@pytest.mark.slow
def test_unit_field_ground_level():
    op = const_op(1.0, 0.05, 512, box=((-2.0, 2.0), (-2.0, 2.0)))
    lam = lowest_eigenpairs(op, 1, sigma=0.045).eigenvalues[0]
    assert lam == pytest.approx(0.05, rel=0.01)


def test_gauge_invariance():
    a = lowest_eigenpairs(const_op(1.0, 0.05, 96, gauge="landau_x"), 6).eigenvalues
    b = lowest_eigenpairs(const_op(1.0, 0.05, 96, gauge="symmetric"), 6).eigenvalues
    np.testing.assert_allclose(a, b, rtol=1e-8)


def test_landau_levels():
    # bulk states pile up at hbar B0 (2n - 1); edge states fill in between
    B0, hbar = 2.0, 0.05
    op = const_op(B0, hbar, 128)
    ev = lowest_eigenpairs(op, 60, sigma=0.09, return_vectors=False).eigenvalues / (hbar * B0)
    np.testing.assert_allclose(ev[:7], 1.0, rtol=2e-3)
    for level in (1, 3, 5):
        assert np.count_nonzero(np.abs(ev - level) < 0.015 * level) >= 6


def test_landau_cluster_small_hbar():
    op = const_op(2.0, 0.02, 256)
    np.testing.assert_allclose(lowest_eigenpairs(op, 12, sigma=0.036).eigenvalues, 0.04, rtol=0.01)


def test_variational():
    op = const_op(1.0, 0.05, 64)
    lam = lowest_eigenpairs(op, 1).eigenvalues[0]
    rng = np.random.default_rng(0)
    assert op.min_rayleigh(rng, trials=100) >= lam - 1e-10


@pytest.mark.parametrize("name", ["fig2", "constant"])
def test_hermitian_nonnegative(name):
    F = make_field(name)
    hbar = 0.02
    box = well_box(F, hbar, 9.0) if name == "fig2" else BOX
    op = assemble_magnetic_laplacian(F, build_potential(F), hbar, box, 64)
    rng = np.random.default_rng(1)
    assert op.hermiticity_defect(rng) < 1e-13 * (hbar / op.grid.h) ** 2
    dense = op.matrix.toarray()
    assert np.max(np.abs(dense - dense.conj().T)) == 0.0
    assert op.min_rayleigh(rng) >= 0.0


def test_stencil_apply_matches_matrix():
    F = make_field("fig2")
    op = assemble_magnetic_laplacian(F, build_potential(F), 0.02, well_box(F, 0.02), 64)
    v = np.random.default_rng(2).normal(size=op.dimension) + 0j
    np.testing.assert_allclose(op.apply(v), op.matrix @ v, atol=1e-12 * np.max(np.abs(op.matrix.data)))


def test_box_too_small():
    F = make_field("fig2")
    with pytest.raises(BoxTooSmall):
        assemble_magnetic_laplacian(F, build_potential(F), 0.01, ((-0.1, 0.1), (-0.1, 0.1)), 64)


def test_bad_arguments():
    with pytest.raises(ValueError):
        const_op(1.0, 0.05, 16)
    with pytest.raises(ValueError):
        const_op(1.0, 0.05, 64, box=((-1.0, 1.0), (-1.0, 2.0)))
    with pytest.raises(ValueError):
        lowest_eigenpairs(const_op(1.0, 0.05, 64), 0)


def test_fig2_ground_state_prediction():
    # leading terms hbar min B + hbar^2 (c1 + c0) with c1 = c0 = 0.5
    F = make_field("fig2")
    hbar = 0.01
    res = solve_with_estimate(F, build_potential(F), hbar, well_box(F, hbar), 256, 1, sigma=0.019, partner_factor=0.75)
    pred = 2 * hbar + hbar**2 * 1.0
    est = res.discretization_error_estimate[0]
    assert est < 1e-4
    assert res.eigenvalues[0] == pytest.approx(pred, abs=2e-6 + 2 * est)


def test_richardson_exact_on_quadratic_error():
    hs = [0.1, 0.07, 0.05]
    vals = [np.array([3.0 + 2 * h**2 - 5 * h**4]) for h in hs]
    assert richardson(vals, hs)[0] == pytest.approx(3.0, abs=1e-12)
    assert richardson(vals[:2], hs[:2])[0] == pytest.approx(3.0, abs=1e-3)


# --- 1D Weyl quantization -------------------------------------------------------


def test_weyl_harmonic_oscillator():
    hbar = 0.05
    op = weyl_quantize_1d(lambda x, xi: x**2 + xi**2, hbar, (-3.0, 3.0), 128)
    w = dense_eigenvalues(op, 5)
    np.testing.assert_allclose(w, hbar * (2 * np.arange(1, 6) - 1), rtol=1e-10)


def test_weyl_constant_symbol():
    op = weyl_quantize_1d(lambda x, xi: 2.5 + 0 * x * xi, 0.1, (-1.0, 1.0), 64, window=-1.0)
    np.testing.assert_allclose(dense_eigenvalues(op), 2.5, atol=1e-12)


def test_weyl_aliasing():
    with pytest.raises(AliasingError):
        weyl_quantize_1d(lambda x, xi: x**2 + xi**2, 0.05, (-3.0, 3.0), 24)
    with pytest.raises(AliasingError):
        weyl_quantize_1d(lambda x, xi: x**2 + xi**2, 0.05, (-0.3, 0.3), 128)


def test_weyl_fig2_symbol():
    # lowest eigenvalue of the quantized B o g^-1 behaves like 2 + hbar c1
    F = make_field("fig2")
    ch = darboux_chart(F)

    def sym(x2, xi2):
        x2, xi2 = np.broadcast_arrays(x2, xi2)
        return F(ch.inverse(np.stack([x2, xi2], axis=-1)))

    hbar = 0.005
    op = weyl_quantize_1d(sym, hbar, (-1.2, 1.2), 160)
    mu = dense_eigenvalues(op, 2)
    assert (mu[0] - 2.0) / hbar == pytest.approx(0.5, abs=0.02)
    assert (mu[1] - 2.0) / hbar == pytest.approx(1.5, abs=0.05)


# --- diagnostics ------------------------------------------------------------------


def test_counting_trivial():
    r = SpectralResult(np.array([0.1, 0.2, 0.3]), None, np.zeros(3))
    assert counting_function(r, 0.05) == 0
    assert counting_function(r, 0.2) == 2
    assert gap_statistics(r, (0.5, 0.6)).size == 0
    np.testing.assert_allclose(gap_statistics(r, (0.15, 0.35)), [0.1])


def test_first_landau_level_count():
    # flux counting: B0 * area / (2 pi hbar) states below 2 hbar B0, up to edge states
    B0, hbar = 2.0, 0.02
    op = const_op(B0, hbar, 192)
    res = lowest_eigenpairs(op, 90, return_vectors=False)
    count = counting_function(res, 2 * hbar * B0)
    flux = B0 * 4.0 / (2 * np.pi * hbar)
    assert 0.8 * flux <= count <= 1.2 * flux


def test_landau_splitting_small():
    B0, hbar = 2.0, 0.02
    res = lowest_eigenpairs(const_op(B0, hbar, 192), 20, return_vectors=False)
    gaps = gap_statistics(res, (0.9 * hbar * B0, 1.1 * hbar * B0))
    assert gaps.size > 10
    assert np.max(gaps) < 0.05 * hbar**2


def test_localization():
    F = make_field("fig2")
    hbar = 0.02
    op = assemble_magnetic_laplacian(F, build_potential(F), hbar, well_box(F, hbar), 128)
    res = lowest_eigenpairs(op, 1)
    v = res.eigenvectors[:, 0]
    assert localization_profile(v, F, op.grid, 1e6) == 0.0
    assert localization_profile(v, F, op.grid, 2.5) < 1e-6


def test_phase_volume_constant():
    F = make_field({"kind": "constant", "B0": 2.0, "domain_box": ((-1, 1), (-1, 1))})
    assert phase_volume(F, 3.0) == pytest.approx(8.0, rel=1e-12)
    assert phase_volume(F, 1.0) == 0.0


def test_phase_volume_quadratic():
    # int_{2 + r^2 <= c} (2 + r^2) = pi (c^2 - 4) / 2
    F = make_field({"kind": "polynomial", "coefficients": {(0, 0): 2.0, (2, 0): 1.0, (0, 2): 1.0}})
    c = 2.5
    assert phase_volume(F, c, box=((-1, 1), (-1, 1)), n=2001) == pytest.approx(np.pi * (c**2 - 4) / 2, rel=2e-3)
