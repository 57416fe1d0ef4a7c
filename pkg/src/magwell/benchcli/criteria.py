"""The nine acceptance checks. Shared by tests/test_acceptance.py and the report experiment."""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Dict, List

import numpy as np

from ..fieldlab import build_potential, darboux_chart, field_minimum, make_field
from ..starbirk.birkhoff import build_transform, expand_star, normal_form
from ..starbirk.series import FormalSeries, star_power
from ..starbirk.transform import symplectic_defect
from ..symflow import flow_divergence, guiding_centers, integrate_H
from .. import specwell as S
from .config import LCG64

DEFAULT_SEED = 20240601


@dataclass
class Check:
    name: str
    value: float
    bound: str
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": _num(self.value), "tolerance": self.bound, "passed": bool(self.passed)}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: List[Check]
    runtime: float
    budget: float
    data: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.runtime < self.budget

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{c.name}={_short(c.value)} ({c.bound})" for c in self.checks)
        return f"[{tag}] criterion {self.number}: {self.title}: {parts}; runtime {self.runtime:.1f}s < {self.budget:.0f}s"

    def to_dict(self):
        return {
            "number": self.number,
            "title": self.title,
            "passed": self.passed,
            "runtime_s": round(self.runtime, 3),
            "budget_s": self.budget,
            "checks": [c.to_dict() for c in self.checks],
            "data": self.data,
        }


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _short(v):
    return f"{v:.4g}" if isinstance(v, (float, np.floating)) else str(v)


def _within(name, v, lo, hi):
    return Check(name, float(v), f"in [{lo}, {hi}]", bool(lo <= v <= hi))


def _le(name, v, bound):
    return Check(name, float(v), f"<= {bound:g}", bool(v <= bound))


def _ge(name, v, bound):
    return Check(name, float(v), f">= {bound:g}", bool(v >= bound))


def loglog_slope(x, y):
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _timed(fn):
    def wrapper(*a, **k):
        t = time.perf_counter()
        res = fn(*a, **k)
        res.runtime = time.perf_counter() - t
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def start_state(field, potential, center, E, direction=(0.0, 1.0)):
    """State with energy E whose first-order guiding center is ``center``."""
    d = np.asarray(direction, float)
    v = 2.0 * np.sqrt(E) * d / np.linalg.norm(d)
    Jv = np.array([-v[1], v[0]])
    c = np.asarray(center, float)
    q = c.copy()
    for _ in range(50):
        q_new = c + Jv / (2.0 * field(q))
        if np.max(np.abs(q_new - q)) < 1e-15:
            break
        q = q_new
    return np.concatenate([q, 0.5 * v + potential.eval(q)])


# ---------------------------------------------------------------------------
# 1


@_timed
def criterion1(T=500.0, dt=1e-3, method="midpoint4"):
    F = make_field({"kind": "constant", "name": "constant", "B0": 1.0})
    A = build_potential(F, "landau_x")
    y0 = start_state(F, A, (0.0, 0.0), 0.25, (1.0, 0.0))  # |qdot| = 1
    tr = integrate_H(F, A, y0, T, dt, method=method, stride=10)
    c, radius, _, _ = guiding_centers(F, A, tr.y)
    r_geo = np.linalg.norm(tr.y[:, :2] - c, axis=1)
    v = 2 * (tr.y[:, 2:] - A.eval(tr.y[:, :2]))
    ang = np.unwrap(np.arctan2(v[:, 1], v[:, 0]))
    period = 2 * np.pi * (tr.times[-1] - tr.times[0]) / abs(ang[-1] - ang[0])
    checks = [
        _le("radius_error", np.max(np.abs(r_geo - 0.5)), 1e-6),
        _le("period_error", abs(period - np.pi), 1e-6),
        _le("energy_drift", tr.relative_energy_drift(), 1e-8),
    ]
    data = {"method": method, "center_ptp": float(np.max(np.ptp(c, axis=0))), "period": period}
    return CriterionResult(1, "constant-field exactness", checks, 0.0, 10.0, data)


# ---------------------------------------------------------------------------
# 2


def level_set_deviation(field, potential, E, T=500.0, dt=1e-3, center=(0.5, 0.0), method="midpoint4"):
    y0 = start_state(field, potential, center, E)
    tr = integrate_H(field, potential, y0, T, dt, method=method, stride=10)
    _, _, _, bc = guiding_centers(field, potential, tr.y)
    return float(np.max(np.abs(bc - bc[0]))), tr


@_timed
def criterion2(energies=(0.05, 0.025, 0.0125), T=500.0, dt=1e-3):
    F = make_field("fig2")
    A = build_potential(F, "landau_x")
    dev = [level_set_deviation(F, A, E, T, dt)[0] for E in energies]
    slope = loglog_slope(energies, dev)
    return CriterionResult(
        2, "level-set drift slope", [_within("slope", slope, 1.7, 2.3)], 0.0, 120.0, {"energies": list(energies), "deviation": dev}
    )


# ---------------------------------------------------------------------------
# 3


def residual_decay(field, nf, N, radii=None, angles=16):
    tr = build_transform(field, nf, N)
    K = nf.classical_normal_form(N)
    radii = np.geomspace(0.02, 0.1, 6) if radii is None else np.asarray(radii)
    th = 2 * np.pi * (np.arange(angles) + 0.5) / angles
    worst = []
    for r in radii:
        z = np.zeros((angles, 4))
        z[:, 0] = r * np.cos(th)
        z[:, 1] = r * np.sin(th)
        z[:, 2:] = nf.basepoint
        h = tr.hamiltonian(z)
        k = np.real(K(z[:, 0], z[:, 1], 0.0, 0.0))
        worst.append(float(np.max(np.abs(h - k))))
    return radii, np.array(worst), tr


@_timed
def criterion3(orders=(2, 3, 4), points=50, seed=DEFAULT_SEED):
    F = make_field("fig2")
    qmin, _ = field_minimum(F)
    bp = darboux_chart(F).forward(qmin)
    nf = normal_form(F, 8, 6, basepoint=bp)
    rng = LCG64(seed)
    Z = np.empty((points, 4))
    Z[:, :2] = rng.uniform((points, 2), -0.1, 0.1)
    Z[:, 2:] = bp + rng.uniform((points, 2), -0.15, 0.15)
    checks, data = [], {}
    for N in orders:
        radii, res, tr = residual_decay(F, nf, N)
        slope = loglog_slope(radii, res)
        checks.append(_ge(f"exponent_N{N}", slope, N + 0.7))
        defect = symplectic_defect(tr.forward, Z)
        checks.append(_le(f"symplectic_defect_N{N}", defect, 1e-6))
        data[f"N{N}"] = {"radii": radii.tolist(), "residual": res.tolist()}
    return CriterionResult(3, "normal-form residual order", checks, 0.0, 60.0, data)


# ---------------------------------------------------------------------------
# 4


@_timed
def criterion4(eps=(0.05, 0.025, 0.0125), orders=(2, 3, 4), T=50.0, dt=0.01, q0=(0.5, 0.0)):
    F = make_field("fig2")
    A = build_potential(F, "landau_x")
    q0 = np.asarray(q0, float)
    bp = darboux_chart(F).forward(q0)
    nf = normal_form(F, 8, 6, basepoint=bp, with_eig=False)
    table, fitted = {}, {}
    for N in orders:
        tr = build_transform(F, nf, N)
        d = []
        for e in eps:
            m0 = np.concatenate([q0, np.array([np.sqrt(e), 0.0]) + A.eval(q0)])
            _, dist = flow_divergence(F, A, nf, tr, m0, T, dt)
            d.append(float(dist[-1]))
        table[N] = d
        fitted[N] = loglog_slope(eps, d)
    checks = [_ge(f"order_N{N}", fitted[N], (N - 1) / 2 - 0.3) for N in orders]
    mono = all(fitted[a] < fitted[b] for a, b in zip(orders, orders[1:]))
    checks.append(Check("monotone_in_N", float(mono), "true", mono))
    return CriterionResult(4, "flow-comparison order", checks, 0.0, 300.0, {"d_T": {str(k): v for k, v in table.items()}})


# ---------------------------------------------------------------------------
# 5 and 6 share the 2D spectra


SPECTRAL_HBARS = (0.02, 0.01, 0.005)
SPECTRAL_GRIDS = (456, 683, 1024)


@lru_cache(maxsize=None)
def low_spectrum(hbar, grids=SPECTRAL_GRIDS, k=6, field_name="fig2", half_width=9.0):
    """Lowest k eigenvalues on each grid and their h -> 0 extrapolation."""
    F = make_field(field_name)
    A = build_potential(F, "landau_x")
    box = S.well_box(F, hbar, half_width)
    vals, hs = [], []
    bmin = field_minimum(F)[1]
    for n in grids:
        op = S.assemble_magnetic_laplacian(F, A, hbar, box, n)
        r = S.lowest_eigenpairs(op, k, sigma=0.95 * bmin * hbar, return_vectors=False)
        vals.append(r.eigenvalues)
        hs.append(op.grid.h)
    ext = S.richardson(vals, hs)
    # error of the extrapolation: compare with the two-grid estimate
    err = np.abs(ext - S.richardson(vals[-2:], hs[-2:]))
    return {"grids": vals, "h": hs, "extrapolated": ext, "error": err, "bmin": bmin}


@_timed
def criterion5(hbars=SPECTRAL_HBARS, js=(1, 2, 3, 4)):
    F = make_field("fig2")
    nf = normal_form(F, 8, 6, basepoint=darboux_chart(F).forward(field_minimum(F)[0]))
    bmin, c0, c1 = nf.eig_coeffs
    specs = [low_spectrum(h) for h in hbars]
    lam1 = np.array([s["extrapolated"][0] for s in specs])
    hb = np.asarray(hbars)
    a = loglog_slope(hb, lam1 - bmin * hb)
    slopes = []
    for h, s in zip(hb, specs):
        g = (s["extrapolated"][: len(js)] - bmin * h) / h**2
        slopes.append(float(np.polyfit(2 * np.asarray(js) - 1, g, 1)[0]))
    worst = max(abs(sl - c1) / c1 for sl in slopes)
    # g(h) = (lambda_1 - h min B) / h^2 = b + d h^s through three points with h halving
    g = (lam1 - bmin * hb) / hb**2
    order = np.argsort(-hb)
    g = g[order]
    ratio = (g[0] - g[1]) / (g[1] - g[2])
    s_exp = float(np.log(ratio) / np.log(hb[order][0] / hb[order][1])) if ratio > 0 else float("nan")
    checks = [
        _within("a", a, 1.9, 2.1),
        _le("c1_rel_error", worst, 0.05),
        _ge("residual_exponent", 2 + s_exp, 2.5),
    ]
    data = {
        "hbar": list(hbars),
        "lambda_extrapolated": [s["extrapolated"].tolist() for s in specs],
        "extrapolation_error": [s["error"].tolist() for s in specs],
        "slopes": slopes,
        "c1": c1,
        "c0": c0,
        "B_min": bmin,
        "g_limit": float(g[2] + (g[2] - g[1]) / (ratio - 1)) if ratio > 1 else None,
    }
    return CriterionResult(5, "low-lying eigenvalue expansion", checks, 0.0, 900.0, data)


def slow_symbol(field):
    ch = darboux_chart(field)

    def sym(x, xi):
        x, xi = np.broadcast_arrays(x, xi)
        q = ch.inverse(np.stack([x, xi], axis=-1), check=False)
        return field.eval_xy(q[..., 0], q[..., 1])

    return sym


def effective_eigenvalues(field, hbar, k, half_width=8.0, n=256):
    """Lowest eigenvalues of the 1D Weyl quantization of B o g^-1, around the minimum."""
    qmin, _ = field_minimum(field)
    x2 = darboux_chart(field).forward(qmin)[0]
    L = half_width * np.sqrt(hbar)
    op = S.weyl_quantize_1d(slow_symbol(field), hbar, (x2 - L, x2 + L), n)
    return S.dense_eigenvalues(op, k)


@_timed
def criterion6(hbars=(0.01, 0.005), k=4):
    F = make_field("fig2")
    C = []
    rows = {}
    for h in hbars:
        lam = low_spectrum(h)["extrapolated"][:k]
        mu = effective_eigenvalues(F, h, k)
        diff = np.abs(lam - h * mu) / h**2
        C.append(float(np.max(diff)))
        rows[str(h)] = {"lambda": lam.tolist(), "hbar_mu": (h * mu).tolist(), "C_j": diff.tolist()}
    ratio = C[1] / C[0]
    checks = [Check("C", C[0], "reported", np.isfinite(C[0])), _within("C_ratio_halving", ratio, 2 / 3, 1.5)]
    return CriterionResult(6, "effective-operator agreement", checks, 0.0, 300.0, {"C": C, "rows": rows})


# ---------------------------------------------------------------------------
# 7


def _random_series(rng, N1, N2, scale=1.0, bp=(0.0, 0.0)):
    from ..kernels import graded_mask

    shape = (N1 + 1, N1 + 1, N1 // 2 + 1, N2 + 1, N2 + 1)
    mask = graded_mask(N1, N2)
    c = rng.uniform(shape, -scale, scale) * mask
    return FormalSeries(c.astype(np.complex128), N1, N2, bp)


@_timed
def criterion7(N1=8, N2=6, seed=DEFAULT_SEED):
    rng = LCG64(seed)
    a = _random_series(rng, N1, N2)
    # homogeneous pieces: a_d1 * b_d2 must be homogeneous of degree d1 + d2
    # with z2-dependence the slow terms raise the degree, so only the
    # filtration deg(p * q) >= d1 + d2 holds; without it the product is homogeneous
    grading = 0.0
    filtration = True
    for d1, d2 in ((1, 2), (2, 3), (3, 3), (2, 4)):
        p = _random_series(rng, N1, 0).degree_part(d1)
        q = _random_series(rng, N1, 0).degree_part(d2)
        pq = p.star(q)
        grading = max(grading, (pq - pq.degree_part(d1 + d2)).max_abs())
        P = _random_series(rng, N1, N2).degree_part(d1)
        Q = _random_series(rng, N1, N2).degree_part(d2)
        md = P.star(Q).min_degree()
        filtration &= md is None or md >= d1 + d2
    # slow jets are truncated at N2, which slow derivatives do not respect, so
    # associativity is exact only for coefficients constant in z2
    fa, fb, fc = (_random_series(rng, N1, 0) for _ in range(3))
    assoc = fa.star(fb).star(fc) - fa.star(fb.star(fc))
    scale = max(1.0, fa.star(fb).star(fc).max_abs())
    I = FormalSeries.action(N1, N2)
    ad_err = (I.ad(a) - I.poisson(a)).max_abs() / max(1.0, a.max_abs())
    F = make_field("fig2")
    bp = darboux_chart(F).forward(field_minimum(F)[0])
    nf = normal_form(F, N1, N2, basepoint=bp)
    Ib = FormalSeries.action(N1, N2, bp)
    kappa = nf.kappa
    comm_I = kappa.ad(Ib).max_abs() / max(1.0, kappa.max_abs())
    comm_H0 = kappa.ad(nf.h0).max_abs() / max(1.0, kappa.max_abs())
    back = expand_star(nf.star_coeffs, N1, N2, bp)
    rt = (back - kappa).max_abs() / max(1.0, kappa.max_abs())
    x1 = FormalSeries.from_terms({(1, 0, 0, 0, 0): 1.0}, N1, N2)
    xi1 = FormalSeries.from_terms({(0, 1, 0, 0, 0): 1.0}, N1, N2)
    ccr = x1.star(xi1) - xi1.star(x1) - FormalSeries.from_terms({(0, 0, 1, 0, 0): 1j}, N1, N2)
    checks = [
        _le("grading_closure", grading, 0.0),
        Check("degree_filtration", float(filtration), "true", bool(filtration)),
        _le("associativity", assoc.max_abs() / scale, 1e-12),
        _le("canonical_commutator", ccr.max_abs(), 1e-15),
        _le("ad_vs_poisson", ad_err, 1e-12),
        _le("kappa_commutes_with_action", comm_I, 1e-12),
        _le("star_power_roundtrip", rt, 1e-12),
    ]
    # the commutator with the full quadratic part b(z2)|z1|^2 involves slow
    # derivatives of b and is not zero; it is reported, not asserted
    return CriterionResult(7, "algebraic exactness suite", checks, 0.0, 30.0, {"kappa_commutator_with_H0": comm_H0})


# ---------------------------------------------------------------------------
# 8 and 9 share the band spectra in a box holding {B <= 2.6}


COUNT_LEVEL = 2.6


def counting_box(field, level, hbar, pad=0.15):
    (x0, x1), (y0, y1) = field.domain_box
    X, Y = np.meshgrid(np.linspace(x0, x1, 801), np.linspace(y0, y1, 801), indexing="ij")
    m = field.eval_xy(X, Y) <= level
    bmin = field_minimum(field)[1]
    L = max(np.abs(X[m]).max(), np.abs(Y[m]).max()) + 2 * np.sqrt(hbar / bmin) + pad
    return ((-L, L), (-L, L))


@lru_cache(maxsize=None)
def band_spectrum(hbar, n=384, level=COUNT_LEVEL, field_name="fig2"):
    F = make_field(field_name)
    A = build_potential(F, "landau_x")
    box = counting_box(F, level, hbar)
    op = S.assemble_magnetic_laplacian(F, A, hbar, box, n, well_threshold=level)
    vol = S.phase_volume(F, level)
    k = int(1.25 * vol / (2 * np.pi * hbar)) + 12
    bmin = field_minimum(F)[1]
    while True:
        r = S.lowest_eigenpairs(op, k, sigma=0.95 * bmin * hbar, return_vectors=True)
        if r.eigenvalues[-1] > level * hbar:
            break
        k = int(1.5 * k)
    mass = S.localization_profile(r.eigenvectors[:, 0], F, op.grid, 2.5)
    r.eigenvectors = None
    return r, vol, mass


@_timed
def criterion8(hbars=(0.02, 0.01, 0.005), level=COUNT_LEVEL):
    ratios, masses = [], {}
    for h in hbars:
        r, vol, mass = band_spectrum(h, level=level)
        ratios.append(S.counting_function(r, level * h) * 2 * np.pi * h / vol)
        masses[h] = mass
    checks = [_within(f"ratio_hbar_{h}", v, 0.8, 1.2) for h, v in zip(hbars, ratios)]
    checks.append(_le("ground_mass_outside", masses.get(0.01, masses[hbars[0]]), 1e-6))
    worst = np.inf
    for h in SPECTRAL_HBARS:
        s = low_spectrum(h)
        worst = min(worst, (s["grids"][-1][0] - s["bmin"] * h + abs(s["extrapolated"][0] - s["grids"][-1][0])) / h**2)
    checks.append(_ge("lambda1_minus_hbar_minB_over_hbar2", worst, 0.0))
    return CriterionResult(8, "counting and localization", checks, 0.0, 600.0, {"ratios": ratios, "level": level})


@_timed
def criterion9(hbars=(0.02, 0.01, 0.005), center=2.5, half=0.1):
    means = []
    for h in hbars:
        r, _, _ = band_spectrum(h)
        g = S.gap_statistics(r, ((center - half) * h, (center + half) * h))
        means.append(float(np.mean(g)))
    b = loglog_slope(hbars, means)
    return CriterionResult(9, "gap scaling in the band", [_within("b", b, 1.7, 2.3)], 0.0, 600.0, {"mean_gaps": means})


ALL: Dict[int, Callable[[], CriterionResult]] = {
    1: criterion1,
    2: criterion2,
    3: criterion3,
    4: criterion4,
    5: criterion5,
    6: criterion6,
    7: criterion7,
    8: criterion8,
    9: criterion9,
}
