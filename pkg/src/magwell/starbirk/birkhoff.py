"""Taylor extraction of H o phi0, the homological iteration and star-power reordering."""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..fieldlab import MagneticField, VectorPotential, field_minimum
from .series import (
    FormalSeries,
    from_complex,
    jet_eval,
    jet_inv,
    series_shape,
    star_power,
    to_complex,
)
from .transform import BaseMap, TruncatedTransform


class NormalFormError(ValueError):
    pass


def _clean(c, rel=1e-13):
    c = np.array(c)
    scale = np.max(np.abs(c)) if c.size else 0.0
    c[np.abs(c) <= rel * scale] = 0
    return c


def series_from_hamiltonian(
    field: MagneticField,
    N1: int = 8,
    N2: int = 6,
    *,
    potential: Optional[VectorPotential] = None,
    basepoint=None,
    base: Optional[BaseMap] = None,
    radius_fast: float = 0.3,
    radius_slow: float = 0.3,
    points_fast: int = 24,
    points_slow: int = 16,
    noise_factor: float = 64.0,
) -> FormalSeries:
    """Taylor coefficients of H o phi0 at (z1 = 0, z2 = basepoint).

    Coefficients come from a 4D discrete Cauchy integral on a complex
    polydisc; the map is evaluated in complex arithmetic. DFT values
    within ``noise_factor`` ulps of the largest sample are treated as zero.
    ``basepoint`` defaults to the chart image of the minimum of B.
    """
    if base is None:
        base = BaseMap(field, potential)
    if basepoint is None:
        qmin, _ = field_minimum(field)
        basepoint = base.chart.forward(qmin)
    basepoint = np.asarray(basepoint, dtype=float)
    if points_fast <= N1 or points_slow <= N2:
        raise NormalFormError("too few Cauchy points for the requested orders")
    tf = np.exp(2j * np.pi * np.arange(points_fast) / points_fast)
    ts = np.exp(2j * np.pi * np.arange(points_slow) / points_slow)
    X1, XI1, S1, S2 = np.meshgrid(radius_fast * tf, radius_fast * tf, radius_slow * ts, radius_slow * ts, indexing="ij")
    z = np.stack([X1, XI1, S1 + basepoint[0], S2 + basepoint[1]], axis=-1)
    try:
        with np.errstate(all="raise"):
            vals = base.hamiltonian(z)
    except (FloatingPointError, RuntimeError) as exc:
        raise NormalFormError(f"jet extraction failed: {exc}") from exc
    if not np.all(np.isfinite(vals)):
        raise NormalFormError("jet extraction failed: non-finite samples")
    F = np.fft.fftn(vals) / vals.size
    # DFT round-off floor, amplified by the radius powers
    floor = noise_factor * np.finfo(float).eps * float(np.max(np.abs(vals)))
    c = np.zeros(series_shape(N1, N2), dtype=np.complex128)
    for a in range(N1 + 1):
        for b in range(N1 + 1 - a):
            for g1 in range(N2 + 1):
                for g2 in range(N2 + 1 - g1):
                    rr = radius_fast ** (a + b) * radius_slow ** (g1 + g2)
                    v = F[a, b, g1, g2]
                    if abs(v) > floor:
                        c[a, b, 0, g1, g2] = v.real / rr
    c[0, 0] = 0
    c[1, 0] = 0
    c[0, 1] = 0
    return FormalSeries(c, N1, N2, basepoint)


@dataclass
class NormalFormResult:
    tau: FormalSeries
    generators: List[FormalSeries]
    kappa: FormalSeries
    h0: FormalSeries
    b_jet: np.ndarray
    star_coeffs: Dict[Tuple[int, int], np.ndarray]
    plain_coeffs: Dict[Tuple[int, int], np.ndarray]
    f_poly: np.ndarray
    order: Tuple[int, int]
    basepoint: np.ndarray
    eig_coeffs: Optional[Tuple[float, float, float]] = None
    diagnostics: dict = dc_field(default_factory=dict)
    field_descriptor: Optional[dict] = None

    def classical_normal_form(self, order: Optional[int] = None) -> FormalSeries:
        """K_order: H0 plus the hbar-free part of kappa up to degree ``order``."""
        order = self.order[0] if order is None else order
        k = self.h0
        kc = self.kappa.hbar_part(0)
        for d in range(3, order + 1):
            k = k + kc.degree_part(d)
        return k

    def f_eval(self, s1, s2, I, max_power=None):
        """f(z2, I) with s = z2 - basepoint, from the hbar-free plain coefficients."""
        out = 0.0
        mp = self.f_poly.shape[0] - 1 if max_power is None else max_power
        for m in range(mp + 1):
            out = out + jet_eval(self.f_poly[m], s1, s2) * I**m
        return out

    def to_dict(self):
        def jets(d):
            return {f"{l},{m}": np.real(v).tolist() for (l, m), v in sorted(d.items())}

        return {
            "order": list(self.order),
            "basepoint": self.basepoint.tolist(),
            "tau": self.tau.to_dict(),
            "kappa": self.kappa.to_dict(),
            "h0": self.h0.to_dict(),
            "star_coeffs": jets(self.star_coeffs),
            "plain_coeffs": jets(self.plain_coeffs),
            "f_poly": np.real(self.f_poly).tolist(),
            "eig_coeffs": None
            if self.eig_coeffs is None
            else dict(zip(("B_min", "c0", "c1"), [float(v) for v in self.eig_coeffs])),
            "diagnostics": self.diagnostics,
            "field": self.field_descriptor,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def resonant_projection(s: FormalSeries) -> FormalSeries:
    w = to_complex(s)
    a = np.arange(s.N1 + 1)
    keep = (a[:, None] == a[None, :])[:, :, None, None, None]
    out = from_complex(w * keep, s)
    return out.like(_clean(out.coeffs.real.astype(np.complex128), 1e-14))


def lie_exp(tau: FormalSeries, h: FormalSeries) -> FormalSeries:
    """exp(i/hbar ad_tau) h as a truncated Lie series."""
    out = h
    term = h
    for k in range(1, 2 * h.N1 + 2):
        term = tau.ad(term) * (1.0 / k)
        if term.is_zero():
            break
        out = out + term
    return out


def birkhoff(series: FormalSeries, check_tol: float = 1e-9) -> NormalFormResult:
    """Degree-by-degree normalization, one generator per degree d = 3..N1.

    At degree d the remainder R is split in (z1, zbar1) monomials. Resonant
    ones (equal exponents) go to kappa; the rest are removed by
    tau_ab = i R_ab / (2 (a - b) b(z2)), 1/b a formal jet inverse. The
    generators are applied in turn, so the full conjugation is
    exp(ad tau_N) ... exp(ad tau_3).
    """
    N1, N2 = series.N1, series.N2
    c = series.coeffs
    if series.min_degree() is not None and series.min_degree() < 2:
        raise NormalFormError("series has terms of degree below 2")
    b = c[2, 0, 0].real.copy()
    if not np.allclose(c[0, 2, 0].real, b, atol=check_tol * (1 + np.max(np.abs(b)))) or np.max(
        np.abs(c[1, 1, 0])
    ) > check_tol * (1 + np.max(np.abs(b))):
        raise NormalFormError("degree-2 part is not B |z1|^2")
    if b[0, 0] == 0:
        raise NormalFormError("zero divisor: B vanishes at the basepoint")
    binv = jet_inv(b, N2)
    h0 = FormalSeries.action(N1, N2, series.basepoint).slow_mul(b)
    H = series.degree_part(2)
    H = h0 + (series - H)  # keep the exactly symmetric quadratic part
    gens = []
    tau_total = FormalSeries.zero(N1, N2, series.basepoint)
    resid = {}
    for d in range(3, N1 + 1):
        R = H.degree_part(d)
        w = to_complex(R)
        T = np.zeros_like(w)
        for a in range(d + 1):
            for bb in range(d + 1 - a):
                if a == bb:
                    continue
                T[a, bb] = 1j * w[a, bb] / (2.0 * (a - bb))
        tau = from_complex(T, R).slow_mul(binv)
        tc = tau.coeffs
        if np.max(np.abs(tc.imag)) > 1e-9 * (1 + np.max(np.abs(tc.real))):
            raise NormalFormError("generator is not real")
        tau = tau.like(_clean(tc.real.astype(np.complex128), 1e-14))
        if not tau.is_zero():
            H = lie_exp(tau, H)
        nr = H.degree_part(d) - resonant_projection(H.degree_part(d))
        resid[d] = nr.max_abs()
        gens.append(tau)
        tau_total = tau_total + tau
    rest = H - h0
    kappa = FormalSeries.zero(N1, N2, series.basepoint)
    for d in range(3, N1 + 1):
        kappa = kappa + resonant_projection(rest.degree_part(d))
    star, plain, f = reorder_star_powers(kappa, b)
    diag = {"nonresonant_residual": {str(k): v for k, v in resid.items()}}
    return NormalFormResult(
        tau=tau_total,
        generators=gens,
        kappa=kappa,
        h0=h0,
        b_jet=b,
        star_coeffs=star,
        plain_coeffs=plain,
        f_poly=f,
        order=(N1, N2),
        basepoint=series.basepoint.copy(),
        diagnostics=diag,
    )


def _action_power_table(N1):
    """e[m][j]: (|z1|^2)^{*m} = sum_j e[m][j] hbar^j |z1|^{2(m-j)}."""
    I = FormalSeries.action(N1, 0)
    e = {}
    for m in range(N1 // 2 + 1):
        P = star_power(I, m)
        row = {}
        for j in range(m + 1):
            row[j] = P.coeffs[2 * (m - j), 0, j, 0, 0].real
        # the expansion must be a polynomial in |z1|^2 and hbar
        recon = FormalSeries.zero(N1, 0)
        for j, v in row.items():
            if v != 0:
                recon = recon + _plain_power(N1, 0, m - j, j) * v
        if np.max(np.abs(recon.coeffs - P.coeffs)) > 1e-12 * (1 + np.max(np.abs(P.coeffs))):
            raise NormalFormError("star power is not a polynomial in |z1|^2")
        e[m] = row
    return e


def _plain_power(N1, N2, m, l, basepoint=(0.0, 0.0)):
    """hbar^l (x1^2 + xi1^2)^m as a series."""
    from math import comb

    terms = {(2 * k, 2 * (m - k), l, 0, 0): float(comb(m, k)) for k in range(m + 1)}
    return FormalSeries.from_terms(terms, N1, N2, basepoint)


def plain_coefficients(kappa: FormalSeries):
    """c[l, m] jets with kappa = sum hbar^l c_{l,m}(z2) |z1|^{2m}; checks the form."""
    N1, N2 = kappa.N1, kappa.N2
    out = {}
    recon = FormalSeries.zero(N1, N2, kappa.basepoint)
    for l in range(N1 // 2 + 1):
        for m in range((N1 - 2 * l) // 2 + 1):
            jet = kappa.coeffs[2 * m, 0, l].real.copy()
            if np.any(jet):
                out[(l, m)] = jet
                recon = recon + _plain_power(N1, N2, m, l, kappa.basepoint).slow_mul(jet)
    err = np.max(np.abs(recon.coeffs - kappa.coeffs))
    if err > 1e-10 * (1 + kappa.max_abs()):
        raise NormalFormError(f"kappa is not a function of |z1|^2 (mismatch {err:.2e})")
    return out


def reorder_star_powers(kappa: FormalSeries, b_jet=None):
    """Rewrite kappa = sum hbar^l c*_{l,m}(z2) (|z1|^2)^{*m}.

    Returns (star_coeffs, plain_coeffs, f_poly) where f_poly[m] is the jet of
    the I^m coefficient of f(z2, I) = b(z2) + sum_{m>=2} c_{0,m}(z2) I^(m-1).
    """
    N1, N2 = kappa.N1, kappa.N2
    plain = plain_coefficients(kappa)
    e = _action_power_table(N1)
    L = N1 // 2
    star = {}
    for p in range(L, -1, -1):
        for l in range(L - p + 1):
            v = plain.get((l, p), np.zeros((N2 + 1, N2 + 1))).copy()
            for j in range(1, l + 1):
                prev = star.get((l - j, p + j))
                if prev is not None:
                    v = v - prev * e[p + j][j]
            if np.any(v):
                star[(l, p)] = v
    if np.any(kappa.coeffs) and not plain:
        raise AssertionError("basis inversion failed")
    f = np.zeros((L + 1, N2 + 1, N2 + 1))
    if b_jet is not None:
        f[0] = np.real(b_jet)
    for (l, m), jet in plain.items():
        if l == 0 and m >= 1:
            f[m - 1] += jet
    return star, plain, f


def expand_star(star, N1, N2, basepoint=(0.0, 0.0)) -> FormalSeries:
    """sum hbar^l c*_{l,m} (|z1|^2)^{*m}, computed with actual Moyal powers."""
    out = FormalSeries.zero(N1, N2, basepoint)
    I = FormalSeries.action(N1, N2, basepoint)
    for (l, m), jet in star.items():
        coef = FormalSeries.zero(N1, N2, basepoint)
        cc = coef.coeffs.copy()
        if 2 * l > N1:
            continue
        cc[0, 0, l] = jet
        out = out + coef.like(cc).star(star_power(I, m))
    return out


def eigenvalue_expansion(nf: NormalFormResult, field: MagneticField):
    """(B_min, c0, c1) for lambda_j ~ hbar B_min + hbar^2 (c1 (2j - 1) + c0).

    c1 = sqrt(det Hess B) / (2 B) at the minimum. c0 is the value at the
    minimum of c*_{0,2} + c*_{1,1} + c*_{2,0}, i.e. the hbar^2 part of the
    n = 1 band symbol produced by the normal form. Weyl-symbol corrections
    from quantizing the base map are not included, so c0 is indicative only.
    """
    qmin, bmin = field_minimum(field)
    Hs = np.asarray(field.hess(qmin), dtype=float)
    det = float(np.linalg.det(Hs))
    scale = max(1.0, float(np.max(np.abs(Hs))))
    if det <= 1e-10 * scale**2 or Hs[0, 0] <= 0:
        raise NormalFormError("degenerate Hessian: B has no non-degenerate minimum")
    c1 = np.sqrt(det) / (2 * bmin)
    from ..fieldlab import darboux_chart

    z2 = darboux_chart(field).forward(qmin)
    s = z2 - nf.basepoint
    c0 = 0.0
    for key in ((0, 2), (1, 1), (2, 0)):
        jet = nf.star_coeffs.get(key)
        if jet is not None:
            c0 += float(np.real(jet_eval(jet, s[0], s[1])))
    return float(bmin), float(c0), float(c1)


def normal_form(field: MagneticField, N1=8, N2=6, *, potential=None, basepoint=None, with_eig=True):
    """series_from_hamiltonian + birkhoff (+ eigenvalue coefficients when a minimum exists)."""
    base = BaseMap(field, potential)
    s = series_from_hamiltonian(field, N1, N2, base=base, basepoint=basepoint)
    nf = birkhoff(s)
    nf.field_descriptor = _descriptor(field)
    if with_eig:
        try:
            nf.eig_coeffs = eigenvalue_expansion(nf, field)
        except NormalFormError:
            nf.eig_coeffs = None
    return nf


def _descriptor(field):
    d = {k: v for k, v in field.descriptor.items() if k not in ("fn", "profile") or isinstance(v, str)}
    if "coefficients" in d and isinstance(d["coefficients"], dict):
        d["coefficients"] = [[int(i), int(j), float(c)] for (i, j), c in d["coefficients"].items()]
    return d


def build_transform(field: MagneticField, nf: NormalFormResult, order: int, *, potential=None, nsteps=16):
    if order > nf.order[0]:
        raise NormalFormError("transform order exceeds the normal form order")
    gens = [g.hbar_part(0).real() for g in nf.generators[: max(0, order - 2)]]
    gens = [g for g in gens if not g.is_zero()]
    return TruncatedTransform(BaseMap(field, potential), gens, order, nsteps)
