"""Coordinates adapted to the zero-energy surface and the truncated transform Phi_N.

Normal coordinates are z = (x1, xi1, x2, xi2) with the form
d(xi1) ^ d(x1) + d(x2) ^ d(xi2). The base map ``phi0`` is built in the
Landau gauge A = (0, a(q)):

    c solves a(c, q2) = p2,   w = q1 - c,
    H = p1^2 + (int_c^{q1} B(s, q2) ds)^2.

(w, p1, c, xi2) with xi2 = int_0^{q2} B(c, s) ds - p1 is an exact Darboux
system. Rescaling the fast pair by sqrt(B) costs a term d(x1 xi1) ^ d(ln B)/2
which is removed by moving the slow point along the flow of
V = (-d2 B, d1 B) / (2 B^2) for time x1 xi1. The 1-jet of phi0 along
{z1 = 0} is the bundle map j(g^-1(z2)) + x1 u1 + xi1 v1.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from ..fieldlab import (
    DarbouxChart,
    MagneticField,
    VectorPotential,
    build_potential,
    darboux_chart,
    frame_vectors,
)
from .. import kernels
from .series import FormalSeries


class TransformError(RuntimeError):
    pass


OMEGA_Z = np.array(
    [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
)


class BaseMap:
    """Exact symplectic map z -> (q, p) whose linearization at z1 = 0 is the bundle map."""

    def __init__(self, field: MagneticField, potential: Optional[VectorPotential] = None, drift_substeps: int = 8):
        self.field = field
        self.chart: DarbouxChart = darboux_chart(field)
        self.landau = build_potential(field, "landau_x")
        self.potential = potential if potential is not None else self.landau
        if self.potential.gauge_tag not in ("landau_x", "symmetric"):
            raise TransformError("base map supports landau_x and symmetric gauges")
        self.nsub = int(drift_substeps)

    # pieces ---------------------------------------------------------------
    def _a(self, q1, q2):
        return self.landau._eval(q1, q2)[..., 1]

    def _drift(self, q1, q2, t):
        """RK4 flow of V for (possibly complex) time t, fixed substeps."""
        B = self.field

        def V(x, y):
            b = B.eval_xy(x, y)
            g1, g2 = B.grad_xy(x, y)
            s = 0.5 / (b * b)
            return -g2 * s, g1 * s

        h = t / self.nsub
        for _ in range(self.nsub):
            k1 = V(q1, q2)
            k2 = V(q1 + 0.5 * h * k1[0], q2 + 0.5 * h * k1[1])
            k3 = V(q1 + 0.5 * h * k2[0], q2 + 0.5 * h * k2[1])
            k4 = V(q1 + h * k3[0], q2 + h * k3[1])
            q1 = q1 + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            q2 = q2 + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        return q1, q2

    def _gauge_shift(self, q1, q2):
        """grad chi with A = A_landau + grad chi."""
        if self.potential.gauge_tag == "landau_x":
            return 0 * q1, 0 * q2
        B0 = float(self.field.coeffs[0, 0])
        return -0.5 * B0 * q2, -0.5 * B0 * q1

    # maps -----------------------------------------------------------------
    def forward(self, z):
        z = np.asarray(z)
        x1, xi1, x2, xi2 = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
        ch = self.chart
        qn2 = ch.solve_q2(x2, xi2, check=False)
        qn1 = x2 + 0 * qn2
        b = self.field.eval_xy(qn1, qn2)
        rb = np.sqrt(b)
        s1, s2 = self._drift(qn1, qn2, -x1 * xi1)
        w = x1 / rb
        p1 = xi1 * rb
        xi2c = ch.xi2(s1, s2, check=False) + p1
        q2 = ch.solve_q2(s1, xi2c, q2_init=s2, check=False)
        q1 = w + s1
        p2 = self._a(s1, q2)
        g1, g2 = self._gauge_shift(q1, q2)
        return np.stack(np.broadcast_arrays(q1, q2, p1 + g1, p2 + g2), axis=-1)

    def inverse(self, m):
        m = np.asarray(m, dtype=float)
        q1, q2, p1, p2 = m[..., 0], m[..., 1], m[..., 2], m[..., 3]
        g1, g2 = self._gauge_shift(q1, q2)
        p1 = p1 - g1
        p2 = p2 - g2
        B = self.field
        c = np.array(q1, dtype=float)
        for _ in range(80):
            step = (self._a(c, q2) - p2) / B.eval_xy(c, q2)
            c = c - step
            if np.all(np.abs(step) <= 1e-15 * (1 + np.abs(c))):
                break
        else:
            raise TransformError("base map inverse did not converge")
        ch = self.chart
        w = q1 - c
        xi2_star = ch.xi2(c, q2, check=False) - p1
        s2 = ch.solve_q2(c, xi2_star, q2_init=q2, check=False)
        n1, n2 = self._drift(c + 0 * s2, s2, w * p1)
        b = B.eval_xy(n1, n2)
        rb = np.sqrt(b)
        xi2 = ch.xi2(n1, n2, check=False)
        return np.stack(np.broadcast_arrays(rb * w, p1 / rb, n1, xi2), axis=-1)

    def bundle_map(self, z):
        """Linearized map j(g^-1(z2)) + x1 u1(z2) + xi1 v1(z2)."""
        z = np.asarray(z, dtype=float)
        q = self.chart.inverse(z[..., 2:], check=False)
        u1, v1 = frame_vectors(self.field, self.potential, q)
        base = np.concatenate([q, self.potential.eval(q)], axis=-1)
        return base + z[..., 0:1] * u1 + z[..., 1:2] * v1

    def hamiltonian(self, z):
        m = self.forward(z)
        d = m[..., 2:] - self.potential._eval(m[..., 0], m[..., 1])
        return np.sum(d * d, axis=-1)


# ---------------------------------------------------------------------------
# polynomial generator flows


class PolyField:
    """Hamiltonian vector field of a classical (hbar = 0) series in z coordinates.

    xdot1 = d tau/d xi1, xidot1 = -d tau/d x1, xdot2 = -d tau/d xi2, xidot2 = d tau/d x2.
    """

    def __init__(self, s: FormalSeries):
        c = s.coeffs[:, :, 0].real  # a, b, g1, g2
        self.basepoint = np.asarray(s.basepoint, dtype=float)
        self.c = c
        comps = [_pd(c, 1), -_pd(c, 0), -_pd(c, 3), _pd(c, 2)]
        nz = np.zeros(c.shape, dtype=bool)
        for d in comps:
            nz |= d != 0
        self.exps = np.argwhere(nz).astype(np.int64)
        idx = tuple(self.exps.T)
        self.coefs = np.ascontiguousarray(np.stack([d[idx] for d in comps], axis=1))
        vi = np.argwhere(c != 0)
        self._vexps = vi.astype(np.int64)
        self._vcoefs = np.zeros((len(vi), 4))
        self._vcoefs[:, 0] = c[tuple(vi.T)]

    def value(self, z):
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, 4)
        v = kernels.poly_field(self._vexps, self._vcoefs, flat, self.basepoint)[:, 0]
        return v.reshape(z.shape[:-1])

    def vector(self, z):
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, 4)
        return kernels.poly_field(self.exps, self.coefs, flat, self.basepoint).reshape(z.shape)

    def flow(self, z, t, nsteps=16):
        z = np.array(z, dtype=float)
        h = t / nsteps
        for _ in range(nsteps):
            k1 = self.vector(z)
            k2 = self.vector(z + 0.5 * h * k1)
            k3 = self.vector(z + 0.5 * h * k2)
            k4 = self.vector(z + h * k3)
            z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return z


def _pd(c, axis):
    n = c.shape[axis]
    idx = np.arange(1, n)
    shp = [1] * c.ndim
    shp[axis] = n - 1
    d = np.take(c, idx, axis=axis) * idx.reshape(shp)
    pad = [(0, 0)] * c.ndim
    pad[axis] = (0, 1)
    return np.pad(d, pad)


@dataclass
class TruncatedTransform:
    """Phi_N = phi0 o flow(tau_3) o flow(tau_4) o ... o flow(tau_N), all flows at time 1."""

    base: BaseMap
    generators: List[FormalSeries]
    order: int
    nsteps: int = 16
    _fields: list = dc_field(default_factory=list, repr=False)

    def __post_init__(self):
        self._fields = [PolyField(g) for g in self.generators]

    @property
    def chart(self):
        return self.base.chart

    def bundle_map(self, z):
        return self.base.bundle_map(z)

    def to_base(self, z):
        """z -> flow(tau_3) o ... o flow(tau_N) (z), still in normal coordinates."""
        z = np.asarray(z, dtype=float)
        for f in reversed(self._fields):
            z = f.flow(z, 1.0, self.nsteps)
        return z

    def from_base(self, y):
        y = np.asarray(y, dtype=float)
        for f in self._fields:
            y = f.flow(y, -1.0, self.nsteps)
        return y

    def forward(self, z):
        return self.base.forward(self.to_base(z))

    def inverse(self, m):
        return self.from_base(self.base.inverse(m))

    def hamiltonian(self, z):
        return self.base.hamiltonian(self.to_base(z))


def numerical_jacobian(fun, z, h=1e-5):
    """Central-difference Jacobian of fun: R^4 -> R^4 at points z (..., 4)."""
    z = np.asarray(z, dtype=float)
    cols = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        cols.append((fun(z + e) - fun(z - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def symplectic_defect(fun, z, h=1e-5, omega_target=None):
    """max over points of || J^T Omega_qp J - Omega_z ||_max."""
    from ..fieldlab import OMEGA_MATRIX

    J = numerical_jacobian(fun, z, h)
    W = np.einsum("...ki,kl,...lj->...ij", J, OMEGA_MATRIX, J)
    return float(np.max(np.abs(W - OMEGA_Z)))
