"""Graded formal series in (x1, xi1, hbar) with jet coefficients in the slow variables.

A series is a dense complex array ``c[alpha, beta, l, g1, g2]`` standing for

    sum c * x1^alpha xi1^beta hbar^l s1^g1 s2^g2,   s = z2 - basepoint,

kept only where alpha + beta + 2 l <= N1 and g1 + g2 <= N2. The degree of a
monomial is alpha + beta + 2 l.

Symplectic conventions: the fast pair carries d(xi1) ^ d(x1), the slow pair
d(x2) ^ d(xi2). The Poisson bracket is

    {f, g} = f_xi1 g_x1 - f_x1 g_xi1 + f_x2 g_xi2 - f_xi2 g_x2,

so that d/dt f = {H, f} along the flow of H and i/hbar [a, b]_* = {a, b} + O(hbar^2).
"""
from __future__ import annotations

import json
from functools import lru_cache
from math import comb

import numpy as np

from .. import kernels


def series_shape(N1, N2):
    return (N1 + 1, N1 + 1, N1 // 2 + 1, N2 + 1, N2 + 1)


class FormalSeries:
    """Truncated graded series; immutable by convention (operations return new objects)."""

    __slots__ = ("coeffs", "N1", "N2", "basepoint")

    def __init__(self, coeffs, N1, N2, basepoint=(0.0, 0.0)):
        c = np.asarray(coeffs, dtype=np.complex128)
        if c.shape != series_shape(N1, N2):
            raise ValueError(f"coefficient array has shape {c.shape}, expected {series_shape(N1, N2)}")
        mask = kernels.graded_mask(N1, N2)
        if np.any(c[~mask] != 0):
            raise ValueError("coefficients outside the truncation")
        self.coeffs = c
        self.N1 = int(N1)
        self.N2 = int(N2)
        self.basepoint = np.asarray(basepoint, dtype=float).reshape(2)

    # construction -----------------------------------------------------------
    @classmethod
    def zero(cls, N1, N2, basepoint=(0.0, 0.0)):
        return cls(np.zeros(series_shape(N1, N2), np.complex128), N1, N2, basepoint)

    @classmethod
    def from_terms(cls, terms, N1, N2, basepoint=(0.0, 0.0)):
        """``terms``: mapping (alpha, beta, l, g1, g2) -> coefficient; terms past the truncation are dropped."""
        c = np.zeros(series_shape(N1, N2), np.complex128)
        for (a, b, l, g1, g2), v in terms.items():
            if a + b + 2 * l <= N1 and g1 + g2 <= N2:
                c[a, b, l, g1, g2] += v
        return cls(c, N1, N2, basepoint)

    @classmethod
    def action(cls, N1, N2, basepoint=(0.0, 0.0)):
        """|z1|^2 = x1^2 + xi1^2."""
        return cls.from_terms({(2, 0, 0, 0, 0): 1.0, (0, 2, 0, 0, 0): 1.0}, N1, N2, basepoint)

    def like(self, coeffs):
        return FormalSeries(coeffs, self.N1, self.N2, self.basepoint)

    def _check(self, other):
        if (self.N1, self.N2) != (other.N1, other.N2):
            raise ValueError("incompatible truncation orders")
        if not np.allclose(self.basepoint, other.basepoint, atol=1e-14):
            raise ValueError("incompatible basepoints")

    # arithmetic -------------------------------------------------------------
    def __add__(self, other):
        self._check(other)
        return self.like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return self.like(self.coeffs - other.coeffs)

    def __neg__(self):
        return self.like(-self.coeffs)

    def __mul__(self, s):
        if isinstance(s, FormalSeries):
            raise TypeError("use star() for the Moyal product or slow_mul() for jets")
        return self.like(self.coeffs * s)

    __rmul__ = __mul__

    def star(self, other):
        self._check(other)
        return self.like(kernels.moyal_dense(self.coeffs, other.coeffs, self.N1, self.N2, 0))

    def ad(self, other):
        """i/hbar [self, other]_*."""
        self._check(other)
        return self.like(kernels.moyal_dense(self.coeffs, other.coeffs, self.N1, self.N2, 1))

    def poisson(self, other):
        """Classical bracket {self, other} (truncated)."""
        self._check(other)
        d = kernels._deriv
        a, b = self.coeffs, other.coeffs
        parts = [
            (d(a, 1, 1), d(b, 0, 1), 1.0),
            (d(a, 0, 1), d(b, 1, 1), -1.0),
            (d(a, 3, 1), d(b, 4, 1), 1.0),
            (d(a, 4, 1), d(b, 3, 1), -1.0),
        ]
        out = np.zeros_like(a)
        for da, db, s in parts:
            out += s * _poly_mul(da, db, out.shape)
        out *= kernels.graded_mask(self.N1, self.N2)
        return self.like(out)

    def slow_mul(self, jet):
        """Pointwise product with a slow jet j[g1, g2] (commutative, no Moyal corrections)."""
        jet = np.asarray(jet, dtype=np.complex128)
        out = np.zeros_like(self.coeffs)
        N2 = self.N2
        for g1 in range(N2 + 1):
            for g2 in range(N2 + 1 - g1):
                v = jet[g1, g2] if g1 < jet.shape[0] and g2 < jet.shape[1] else 0
                if v == 0:
                    continue
                out[:, :, :, g1:, g2:] += v * self.coeffs[:, :, :, : N2 + 1 - g1, : N2 + 1 - g2]
        out *= kernels.graded_mask(self.N1, N2)
        return self.like(out)

    # grading ----------------------------------------------------------------
    def degree_part(self, d):
        a = np.arange(self.N1 + 1)
        l = np.arange(self.N1 // 2 + 1)
        deg = a[:, None, None] + a[None, :, None] + 2 * l[None, None, :]
        return self.like(self.coeffs * (deg == d)[:, :, :, None, None])

    def degrees(self):
        idx = np.argwhere(self.coeffs != 0)
        return sorted({int(a + b + 2 * l) for a, b, l, _, _ in idx})

    def min_degree(self):
        ds = self.degrees()
        return ds[0] if ds else None

    def hbar_part(self, l):
        c = np.zeros_like(self.coeffs)
        c[:, :, l] = self.coeffs[:, :, l]
        return self.like(c)

    def real(self):
        return self.like(self.coeffs.real.astype(np.complex128))

    def max_abs(self):
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def is_zero(self, tol=0.0):
        return self.max_abs() <= tol

    def terms(self):
        idx = np.argwhere(self.coeffs != 0)
        return {tuple(int(v) for v in i): complex(self.coeffs[tuple(i)]) for i in idx}

    # evaluation -------------------------------------------------------------
    def __call__(self, x1, xi1, s1=0.0, s2=0.0, hbar=0.0):
        x1, xi1, s1, s2 = np.broadcast_arrays(*(np.asarray(v) for v in (x1, xi1, s1, s2)))
        c = self.coeffs
        N1, N2 = self.N1, self.N2
        px = np.stack([x1**k for k in range(N1 + 1)])
        pxi = np.stack([xi1**k for k in range(N1 + 1)])
        ph = np.array([hbar**k for k in range(N1 // 2 + 1)], dtype=np.complex128)
        p1 = np.stack([s1**k for k in range(N2 + 1)])
        p2 = np.stack([s2**k for k in range(N2 + 1)])
        t = np.tensordot(c, ph, axes=([2], [0]))  # a, b, g1, g2
        return np.einsum("abij,a...,b...,i...,j...->...", t, px, pxi, p1, p2)

    # serialization ----------------------------------------------------------
    def to_dict(self):
        terms = {
            ",".join(str(v) for v in k): [c.real, c.imag] for k, c in sorted(self.terms().items())
        }
        return {"N1": self.N1, "N2": self.N2, "basepoint": list(self.basepoint), "terms": terms}

    @classmethod
    def from_dict(cls, d):
        terms = {tuple(int(s) for s in k.split(",")): complex(v[0], v[1]) for k, v in d["terms"].items()}
        return cls.from_terms(terms, int(d["N1"]), int(d["N2"]), d["basepoint"])

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        return f"FormalSeries(N1={self.N1}, N2={self.N2}, nterms={len(self.terms())}, degrees={self.degrees()})"


def _poly_mul(a, b, shape):
    """Truncated dense polynomial product, exact (no FFT)."""
    out = np.zeros(shape, dtype=np.complex128)
    ia = np.argwhere(a != 0)
    for i in ia:
        v = a[tuple(i)]
        hi = [min(shape[d] - i[d], b.shape[d]) for d in range(5)]
        if min(hi) <= 0:
            continue
        dst = tuple(slice(i[d], i[d] + hi[d]) for d in range(5))
        src = tuple(slice(0, hi[d]) for d in range(5))
        out[dst] += v * b[src]
    return out


def moyal(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    return a.star(b)


def ad_action(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    """i/hbar (a * b - b * a)."""
    return a.ad(b)


def star_power(a: FormalSeries, m: int) -> FormalSeries:
    out = FormalSeries.from_terms({(0, 0, 0, 0, 0): 1.0}, a.N1, a.N2, a.basepoint)
    for _ in range(m):
        out = out.star(a)
    return out


# ---------------------------------------------------------------------------
# slow jets: 2D arrays j[g1, g2] truncated at g1 + g2 <= N2


def jet_mask(N2):
    g = np.arange(N2 + 1)
    return (g[:, None] + g[None, :]) <= N2


def jet_mul(a, b, N2):
    a = np.asarray(a)
    b = np.asarray(b)
    out = np.zeros((N2 + 1, N2 + 1), dtype=np.result_type(a, b))
    for i in range(min(a.shape[0], N2 + 1)):
        for j in range(min(a.shape[1], N2 + 1 - i)):
            if a[i, j] == 0:
                continue
            ni, nj = N2 + 1 - i, N2 + 1 - j
            out[i:, j:] += a[i, j] * b[:ni, :nj]
    return out * jet_mask(N2)


def jet_inv(a, N2):
    """1/a as a truncated jet; a[0, 0] must be nonzero."""
    a = np.asarray(a)
    a0 = a[0, 0]
    if a0 == 0:
        raise ZeroDivisionError("jet with vanishing constant term")
    u = -(a * jet_mask(N2)) / a0
    u = np.array(u)
    u[0, 0] = 0
    term = np.zeros((N2 + 1, N2 + 1), dtype=np.result_type(a, float))
    term[0, 0] = 1
    total = term.copy()
    for _ in range(N2):
        term = jet_mul(term, u, N2)
        total = total + term
    return total / a0


def jet_eval(j, s1, s2):
    j = np.asarray(j)
    return np.polynomial.polynomial.polyval2d(s1, s2, j)


# ---------------------------------------------------------------------------
# real (x, xi) <-> complex (z, zbar) bases for homogeneous fast polynomials


@lru_cache(maxsize=None)
def _to_complex_matrix(m):
    """M[a, alpha] with x^alpha xi^(m-alpha) = sum_a M[a, alpha] z^a zbar^(m-a)."""
    # x = (z + zb)/2, xi = (z - zb)/(2i)
    M = np.zeros((m + 1, m + 1), dtype=np.complex128)
    for alpha in range(m + 1):
        beta = m - alpha
        pre = (0.5**alpha) * (1 / (2j)) ** beta
        for i in range(alpha + 1):
            for j in range(beta + 1):
                # (z + zb)^alpha: C(alpha, i) z^i zb^(alpha-i); (z - zb)^beta: C(beta, j) z^j (-zb)^(beta-j)
                a = i + j
                M[a, alpha] += pre * comb(alpha, i) * comb(beta, j) * (-1) ** (beta - j)
    return M


@lru_cache(maxsize=None)
def _from_complex_matrix(m):
    """inverse: z^a zbar^(m-a) = sum_alpha W[alpha, a] x^alpha xi^(m-alpha)."""
    return np.linalg.inv(_to_complex_matrix(m))


def to_complex(s: FormalSeries):
    """Array w[a, b, l, g1, g2]: coefficients of z1^a zbar1^b."""
    c = s.coeffs
    N1 = s.N1
    w = np.zeros_like(c)
    for m in range(N1 + 1):
        M = _to_complex_matrix(m)
        alpha = np.arange(m + 1)
        block = c[alpha, m - alpha]  # (m+1, l, g1, g2)
        res = np.tensordot(M, block, axes=([1], [0]))
        w[alpha, m - alpha] = res
    return w


def from_complex(w, like: FormalSeries) -> FormalSeries:
    N1 = like.N1
    c = np.zeros_like(w)
    for m in range(N1 + 1):
        W = _from_complex_matrix(m)
        a = np.arange(m + 1)
        block = w[a, m - a]
        c[a, m - a] = np.tensordot(W, block, axes=([1], [0]))
    c = c * kernels.graded_mask(like.N1, like.N2)
    return like.like(c)
