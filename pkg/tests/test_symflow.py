import numpy as np
import pytest

from magwell.benchcli.criteria import start_state
from magwell.fieldlab import PhaseState, build_potential, darboux_chart, make_field, sigma_embed
from magwell.starbirk.birkhoff import build_transform, normal_form
from magwell.symflow import (
    DomainError,
    compare_flows,
    guiding_center,
    guiding_centers,
    hamiltonian,
    integrate_H,
    integrate_K,
    mirror_points,
    trajectory_table,
    TRAJECTORY_COLUMNS,
)

BUILTINS = ["constant", "quadratic", "ridge", "fig2"]


def test_hamiltonian_examples():
    F = make_field(1.0)
    A = build_potential(F, "symmetric")
    assert hamiltonian(F, A, sigma_embed(F, A, np.array([0.3, 0.7]))) == 0.0
    assert hamiltonian(F, A, PhaseState(np.zeros(2), np.array([0.5, 0.0]))) == 0.25


def test_kinetic_identity():
    F = make_field("fig2")
    A = build_potential(F)
    y = np.array([0.2, -0.1, 0.4, 0.3])
    v = 2 * (y[2:] - A.eval(y[:2]))
    assert hamiltonian(F, A, y) == pytest.approx(0.25 * v @ v, rel=1e-15)


@pytest.mark.parametrize("method", ["implicit_midpoint", "midpoint4", "boris", "dop853"])
def test_constant_circle(method):
    F = make_field(1.0)
    A = build_potential(F)
    y0 = start_state(F, A, (0.0, 0.0), 0.25, (1.0, 0.0))
    tr = integrate_H(F, A, y0, 10.0, 1e-3, method=method, stride=10)
    c, r, I, _ = guiding_centers(F, A, tr.y)
    np.testing.assert_allclose(np.linalg.norm(tr.y[:, :2] - c, axis=1), 0.5, atol=1e-6)
    np.testing.assert_allclose(r, 0.5, atol=1e-9)
    assert np.max(np.ptp(c, axis=0)) < 1e-10
    np.testing.assert_allclose(I, tr.energy / 1.0, rtol=1e-14)


def test_constant_angular_velocity():
    F = make_field(1.0)
    A = build_potential(F)
    y0 = start_state(F, A, (0.0, 0.0), 0.25, (1.0, 0.0))
    tr = integrate_H(F, A, y0, 20.0, 1e-3, method="midpoint4", stride=10)
    v = 2 * (tr.y[:, 2:] - A.eval(tr.y[:, :2]))
    phase = np.unwrap(np.arctan2(v[:, 1], v[:, 0]))
    rate = np.polyfit(tr.times, phase, 1)[0]
    assert rate == pytest.approx(-2.0, abs=1e-6)


def test_stationary_on_sigma():
    F = make_field("fig2")
    A = build_potential(F)
    s = sigma_embed(F, A, np.array([0.3, 0.2]))
    tr = integrate_H(F, A, s, 5.0, 1e-3, stride=100)
    np.testing.assert_allclose(tr.y, np.broadcast_to(s.as_array(), tr.y.shape), atol=1e-13)


def test_dt_rule():
    F = make_field("fig2")
    with pytest.raises(ValueError):
        integrate_H(F, build_potential(F), np.array([0.5, 0, 0.2, 0]), 1.0, 0.05)


def test_leaves_box():
    F = make_field({"kind": "constant", "B0": 1.0, "domain_box": ((-1, 1), (-1, 1))})
    A = build_potential(F)
    y0 = start_state(F, A, (0.9, 0.0), 0.25, (1.0, 0.0))
    with pytest.raises(DomainError):
        integrate_H(F, A, y0, 5.0, 1e-3)


@pytest.mark.parametrize("name", BUILTINS)
def test_energy_invariant_implicit_midpoint(name):
    # stated bound for the plain midpoint rule at dt = 1e-3 over [0, 500]
    F = make_field(name)
    A = build_potential(F)
    tr = integrate_H(F, A, start_state(F, A, (0.5, 0.0), 0.05), 500.0, 1e-3, method="implicit_midpoint", stride=100)
    assert tr.relative_energy_drift() <= 1e-8


@pytest.mark.parametrize("name", BUILTINS)
def test_energy_midpoint4(name):
    F = make_field(name)
    A = build_potential(F)
    tr = integrate_H(F, A, start_state(F, A, (0.5, 0.0), 0.05), 500.0, 1e-3, method="midpoint4", stride=100)
    assert tr.relative_energy_drift() <= 1e-8


def test_midpoint_energy_error_not_secular():
    F = make_field("fig2")
    A = build_potential(F)
    tr = integrate_H(F, A, start_state(F, A, (0.5, 0.0), 0.05), 500.0, 1e-3, stride=50)
    err = np.abs(tr.energy - tr.energy[0])
    half = err.size // 2
    assert err[half:].max() < 1.5 * err[:half].max()


def test_reversibility():
    F = make_field("fig2")
    A = build_potential(F)
    y0 = start_state(F, A, (0.5, 0.0), 0.05)
    fw = integrate_H(F, A, y0, 20.0, 1e-3, stride=20000)
    bw = integrate_H(F, A, fw.y[-1], 20.0, 1e-3, stride=20000, backward=True)
    assert np.max(np.abs(bw.y[-1] - y0)) < 1e-7


def test_guiding_center_record():
    F = make_field(2.0)
    A = build_potential(F)
    y0 = start_state(F, A, (0.1, -0.2), 0.04)
    g = guiding_center(F, A, y0)
    np.testing.assert_allclose(g.center, [0.1, -0.2], atol=1e-15)
    assert g.radius == pytest.approx(0.4 / 4.0)
    assert g.action == pytest.approx(0.04 / 2.0)
    assert g.radius >= 0 and g.action >= 0


def test_trajectory_table_columns():
    F = make_field("fig2")
    A = build_potential(F)
    tr = integrate_H(F, A, start_state(F, A, (0.5, 0.0), 0.05), 1.0, 1e-3, stride=100)
    tab = trajectory_table(F, A, tr)
    assert tab.shape == (len(tr), len(TRAJECTORY_COLUMNS))
    assert TRAJECTORY_COLUMNS == ("t", "q1", "q2", "p1", "p2", "H", "c1", "c2", "I", "B_at_c")


def test_integrate_K_constant():
    F = make_field(1.0)
    nf = normal_form(F, 6, 4, basepoint=(0.2, 0.3), with_eig=False)
    z1 = 0.3 + 0.1j
    kt = integrate_K(F, nf, (z1, np.array([0.2, 0.3])), 5.0, 0.01)
    np.testing.assert_allclose(kt.z1, z1 * np.exp(-2j * kt.times), atol=1e-10)
    np.testing.assert_allclose(kt.z2, np.broadcast_to([0.2, 0.3], kt.z2.shape), atol=1e-14)


def test_integrate_K_action_conserved():
    F = make_field("fig2")
    bp = darboux_chart(F).forward(np.array([0.5, 0.0]))
    nf = normal_form(F, 6, 4, basepoint=bp, with_eig=False)
    kt = integrate_K(F, nf, (0.2 + 0.05j, bp), 20.0, 0.01)
    np.testing.assert_allclose(np.abs(kt.z1), abs(0.2 + 0.05j), rtol=1e-14)


def test_integrate_K_level_set_order2():
    # at order 2, z2 moves on level sets of I * B o g^-1 with I fixed
    F = make_field("fig2")
    ch = darboux_chart(F)
    bp = ch.forward(np.array([0.5, 0.0]))
    nf = normal_form(F, 6, 4, basepoint=bp, with_eig=False)
    kt = integrate_K(F, nf, (0.1 + 0.0j, bp), 20.0, 0.01, order=2)
    q = ch.inverse(kt.z2)
    b = F(q)
    assert np.max(np.abs(b - b[0])) < 1e-8


def test_compare_flows_constant():
    F = make_field(1.0)
    A = build_potential(F)
    nf = normal_form(F, 6, 4, basepoint=(0.0, 0.0), with_eig=False)
    T = build_transform(F, nf, 4)
    y0 = start_state(F, A, (0.0, 0.0), 0.05, (1.0, 0.0))
    trH = integrate_H(F, A, y0, 100.0, 0.01, method="dop853")
    z0 = T.inverse(y0)
    trK = integrate_K(F, nf, (z0[0] + 1j * z0[1], z0[2:]), 100.0, 0.01)
    d = compare_flows(trH, trK, T)
    assert np.max(d) <= 1e-8


def test_compare_flows_grid_mismatch():
    F = make_field(1.0)
    A = build_potential(F)
    nf = normal_form(F, 6, 4, basepoint=(0.0, 0.0), with_eig=False)
    T = build_transform(F, nf, 4)
    y0 = start_state(F, A, (0.0, 0.0), 0.05, (1.0, 0.0))
    trH = integrate_H(F, A, y0, 1.0, 0.01, method="dop853")
    z0 = T.inverse(y0)
    trK = integrate_K(F, nf, (z0[0] + 1j * z0[1], z0[2:]), 2.0, 0.01)
    with pytest.raises(ValueError):
        compare_flows(trH, trK, T)


def test_mirror_points_constant():
    F = make_field(1.0)
    A = build_potential(F)
    tr = integrate_H(F, A, start_state(F, A, (0.0, 0.0), 0.05), 50.0, 1e-3, method="midpoint4", stride=10)
    assert mirror_points(tr, F, A) == []


def test_mirror_points_fig2():
    F = make_field("fig2")
    A = build_potential(F)
    tr = integrate_H(F, A, start_state(F, A, (0.5, 0.0), 0.05), 500.0, 1e-3, method="midpoint4", stride=10)
    assert len(mirror_points(tr, F, A)) >= 1
