"""Magnetic field models, vector potentials, the zero-energy surface and its chart.

Conventions
-----------
Phase-space points are (q, p) in T*R^2 with H(q, p) = |p - A(q)|^2 and the
symplectic form

    omega((Q1, P1), (Q2, P2)) = <P1, Q2> - <P2, Q1>.

Fields are stored with B > 0 on the working box. A field given with B < 0
is flipped at construction and ``flipped`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly


class FieldError(ValueError):
    """Invalid field descriptor or a field vanishing on its box."""


class ChartError(RuntimeError):
    """Darboux chart quadrature or inversion failure."""


_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
# nodes/weights on [0, 1]
_GL01_X = 0.5 * (_GL_X + 1.0)
_GL01_W = 0.5 * _GL_W

FIG2_COEFFS = {(0, 0): 2.0, (2, 0): 1.0, (0, 2): 1.0, (3, 0): 1.0 / 3.0, (4, 0): 1.0 / 20.0}


def _coeff_matrix(coeffs) -> np.ndarray:
    """Accept {(i, j): c}, [[i, j, c], ...] or a 2D array; return P[i, j]."""
    if isinstance(coeffs, np.ndarray) and coeffs.ndim == 2:
        return np.array(coeffs, dtype=float)
    if isinstance(coeffs, dict):
        items = [(int(i), int(j), float(c)) for (i, j), c in coeffs.items()]
    else:
        items = [(int(t[0]), int(t[1]), float(t[2])) for t in coeffs]
    if not items:
        raise FieldError("polynomial field needs at least one coefficient")
    if min(min(i, j) for i, j, _ in items) < 0:
        raise FieldError("negative exponent in polynomial field")
    ni = max(i for i, _, _ in items) + 1
    nj = max(j for _, j, _ in items) + 1
    P = np.zeros((ni, nj))
    for i, j, c in items:
        P[i, j] += c
    return P


def _poly_eval(P, q1, q2):
    return npoly.polyval2d(q1, q2, P)


@dataclass(frozen=True)
class PhaseState:
    """A point (q, p) of T*R^2."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(2))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(2))
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("non-finite phase state")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, y) -> "PhaseState":
        y = np.asarray(y, dtype=float)
        return cls(y[:2], y[2:4])


@dataclass(frozen=True)
class MagneticField:
    """Scalar field B(q) on the plane, oriented so that B > 0 on ``domain_box``.

    ``kind`` is one of constant, polynomial, radial, callable. Polynomial
    fields (constant included) carry ``coeffs`` with B = sum P[i, j] x^i y^j
    and have exact derivatives; the rest use 4th-order central differences.
    Every evaluator accepts arrays of shape (..., 2), real or complex.
    """

    name: str
    kind: str
    domain_box: Tuple[Tuple[float, float], Tuple[float, float]]
    confinement: Optional[Tuple[float, float]] = None
    coeffs: Optional[np.ndarray] = None
    profile: Optional[Callable] = None
    fn: Optional[Callable] = None
    flipped: bool = False
    descriptor: dict = dc_field(default_factory=dict)

    @property
    def is_polynomial(self) -> bool:
        return self.coeffs is not None

    # raw evaluation before orientation
    def _raw(self, q1, q2):
        if self.coeffs is not None:
            return _poly_eval(self.coeffs, q1, q2)
        if self.profile is not None:
            r = np.sqrt(q1 * q1 + q2 * q2)
            return self.profile(r)
        return self.fn(q1, q2)

    def eval_xy(self, q1, q2):
        v = self._raw(q1, q2)
        if np.ndim(v) == 0 and np.ndim(q1) > 0:
            v = np.full(np.broadcast(q1, q2).shape, v)
        return -v if (self.flipped and self.coeffs is None) else v

    def __call__(self, q):
        q = np.asarray(q)
        return self.eval_xy(q[..., 0], q[..., 1])

    def _fd_step(self, q1, q2):
        return 1e-4 * (1.0 + np.sqrt(np.abs(q1) ** 2 + np.abs(q2) ** 2))

    def grad_xy(self, q1, q2):
        if self.coeffs is not None:
            P1 = npoly.polyder(self.coeffs, axis=0)
            P2 = npoly.polyder(self.coeffs, axis=1)
            g1 = _poly_eval(P1, q1, q2) + 0 * q2
            g2 = _poly_eval(P2, q1, q2) + 0 * q1
            return g1, g2
        h = self._fd_step(q1, q2)
        f = self.eval_xy
        g1 = (-f(q1 + 2 * h, q2) + 8 * f(q1 + h, q2) - 8 * f(q1 - h, q2) + f(q1 - 2 * h, q2)) / (12 * h)
        g2 = (-f(q1, q2 + 2 * h) + 8 * f(q1, q2 + h) - 8 * f(q1, q2 - h) + f(q1, q2 - 2 * h)) / (12 * h)
        return g1, g2

    def grad(self, q):
        q = np.asarray(q)
        g1, g2 = self.grad_xy(q[..., 0], q[..., 1])
        return np.stack([g1, g2], axis=-1)

    def hess(self, q):
        q = np.asarray(q)
        q1, q2 = q[..., 0], q[..., 1]
        if self.coeffs is not None:
            P = self.coeffs
            h11 = _poly_eval(npoly.polyder(P, 2, axis=0), q1, q2) + 0 * q2
            h22 = _poly_eval(npoly.polyder(P, 2, axis=1), q1, q2) + 0 * q1
            h12 = _poly_eval(npoly.polyder(npoly.polyder(P, axis=0), axis=1), q1, q2) + 0 * q1 + 0 * q2
        else:
            # differentiate the gradient once more, 4th-order stencil
            h = self._fd_step(q1, q2)

            def d(fun, e1, e2):
                return (
                    -fun(q1 + 2 * h * e1, q2 + 2 * h * e2)
                    + 8 * fun(q1 + h * e1, q2 + h * e2)
                    - 8 * fun(q1 - h * e1, q2 - h * e2)
                    + fun(q1 - 2 * h * e1, q2 - 2 * h * e2)
                ) / (12 * h)

            g1 = lambda a, b: self.grad_xy(a, b)[0]
            g2 = lambda a, b: self.grad_xy(a, b)[1]
            h11 = d(g1, 1, 0)
            h22 = d(g2, 0, 1)
            h12 = 0.5 * (d(g1, 0, 1) + d(g2, 1, 0))
        row1 = np.stack([h11, h12], axis=-1)
        row2 = np.stack([h12, h22], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def sample_grid(self, n=41):
        (x0, x1), (y0, y1) = self.domain_box
        X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
        return X, Y

    def max_on_box(self, n=81) -> float:
        X, Y = self.sample_grid(n)
        return float(np.max(self.eval_xy(X, Y)))

    def min_on_box(self, n=81) -> float:
        X, Y = self.sample_grid(n)
        return float(np.min(self.eval_xy(X, Y)))


def _default_box(confinement):
    if confinement is not None:
        m = float(confinement[1]) + 1.0
        return ((-m, m), (-m, m))
    return ((-5.0, 5.0), (-5.0, 5.0))


_RADIAL_NS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "arctan", "pi", "abs")
}


def _profile_from_text(expr: str):
    code = compile(expr, "<radial profile>", "eval")
    for nm in code.co_names:
        if nm not in _RADIAL_NS and nm != "r":
            raise FieldError(f"radial profile uses unknown name {nm!r}")

    def prof(r):
        return eval(code, {"__builtins__": {}}, dict(_RADIAL_NS, r=r))

    return prof


def make_field(spec) -> MagneticField:
    """Build a field from a descriptor.

    Accepted forms: a built-in name (``"fig2"``, ``"quadratic"``, ``"ridge"``,
    ``"constant"``), a number (constant field), or a dict with ``kind`` in
    {constant, polynomial, radial, callable} and optional ``domain_box``,
    ``confinement``, ``name``.

    >>> make_field("fig2")(np.array([1.0, 0.0]))
    3.3833333333333333
    """
    if isinstance(spec, (int, float)):
        spec = {"kind": "constant", "B0": float(spec)}
    if isinstance(spec, str):
        spec = builtin_descriptor(spec)
    spec = dict(spec)
    kind = spec.get("kind")
    conf = spec.get("confinement")
    if conf is not None:
        conf = (float(conf[0]), float(conf[1]))
    box = spec.get("domain_box")
    box = _default_box(conf) if box is None else tuple((float(a), float(b)) for a, b in box)
    if box[0][0] >= box[0][1] or box[1][0] >= box[1][1]:
        raise FieldError("empty domain box")
    name = spec.get("name", kind)
    coeffs = profile = fn = None
    if kind == "constant":
        B0 = float(spec.get("B0", 1.0))
        coeffs = np.array([[B0]])
    elif kind == "polynomial":
        coeffs = _coeff_matrix(spec["coefficients"])
    elif kind == "radial":
        profile = spec["profile"]
        if isinstance(profile, str):
            profile = _profile_from_text(profile)
    elif kind == "callable":
        fn = spec["fn"]
    else:
        raise FieldError(f"unknown field kind {kind!r}")
    fld = MagneticField(name, kind, box, conf, coeffs, profile, fn, False, spec)
    X, Y = fld.sample_grid(41)
    with np.errstate(all="ignore"):
        vals = np.asarray(fld.eval_xy(X, Y), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FieldError("field is not finite on its domain box")
    if np.all(vals > 0):
        return fld
    if np.all(vals < 0):
        if coeffs is not None:
            return MagneticField(name, kind, box, conf, -coeffs, None, None, True, spec)
        return MagneticField(name, kind, box, conf, None, profile, fn, True, spec)
    raise FieldError("field vanishes or changes sign inside domain_box")


def builtin_descriptor(name: str) -> dict:
    name = name.strip().lower()
    if name == "fig2":
        return {
            "kind": "polynomial",
            "name": "fig2",
            "coefficients": FIG2_COEFFS,
            "confinement": (3.7, 2.0),
            "domain_box": ((-3.0, 3.0), (-3.0, 3.0)),
        }
    if name == "quadratic":
        return {
            "kind": "polynomial",
            "name": "quadratic",
            "coefficients": {(0, 0): 2.0, (2, 0): 1.0, (0, 2): 1.0},
            "confinement": (3.0, 1.0),
            "domain_box": ((-3.0, 3.0), (-3.0, 3.0)),
        }
    if name == "ridge":
        # elliptic level sets, symmetric under q2 -> -q2
        return {
            "kind": "polynomial",
            "name": "ridge",
            "coefficients": {(0, 0): 2.0, (2, 0): 1.0, (0, 2): 0.25},
            "domain_box": ((-4.0, 4.0), (-4.0, 4.0)),
        }
    if name == "constant":
        return {"kind": "constant", "name": "constant", "B0": 1.0}
    raise FieldError(f"unknown built-in field {name!r}")


def field_minimum(field: MagneticField):
    """Location and value of the minimum of B on the box (grid seed + BFGS)."""
    from scipy.optimize import minimize

    X, Y = field.sample_grid(121)
    V = field.eval_xy(X, Y)
    k = np.unravel_index(np.argmin(V), V.shape)
    x0 = np.array([X[k], Y[k]])
    res = minimize(
        lambda q: float(field(q)),
        x0,
        jac=lambda q: np.asarray(field.grad(q), dtype=float),
        method="BFGS",
        options={"gtol": 1e-13},
    )
    q = res.x
    return q, float(field(q))


# ---------------------------------------------------------------------------
# vector potentials


@dataclass(frozen=True)
class VectorPotential:
    """A with curl A = B. ``jac[..., i, j] = dA_i/dq_j``.

    ``poly`` holds coefficient matrices (A1, A2) when both components are
    polynomials; the compiled integrators use them.
    """

    field: MagneticField
    gauge_tag: str
    _eval: Callable
    _jac: Callable
    poly: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def eval(self, q):
        q = np.asarray(q)
        return self._eval(q[..., 0], q[..., 1])

    def __call__(self, q):
        return self.eval(q)

    def jac(self, q):
        q = np.asarray(q)
        return self._jac(q[..., 0], q[..., 1])


def _stack2(a, b):
    return np.stack(np.broadcast_arrays(a, b), axis=-1)


def _jacmat(a11, a12, a21, a22):
    a11, a12, a21, a22 = np.broadcast_arrays(a11, a12, a21, a22)
    return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)


def build_potential(field: MagneticField, gauge_tag: str = "landau_x") -> VectorPotential:
    """Vector potential in the requested gauge.

    landau_x: A = (0, int_0^{q1} B(s, q2) ds). symmetric: constant fields only.
    """
    if gauge_tag == "symmetric":
        if field.kind != "constant":
            raise FieldError("symmetric gauge needs a constant field")
        B0 = float(field.coeffs[0, 0])
        A1 = np.array([[0.0, -0.5 * B0]])
        A2 = np.array([[0.0], [0.5 * B0]])
        ev = lambda x, y: _stack2(-0.5 * B0 * y, 0.5 * B0 * x)
        jc = lambda x, y: _jacmat(0 * x, -0.5 * B0 + 0 * x, 0.5 * B0 + 0 * x, 0 * x)
        return VectorPotential(field, "symmetric", ev, jc, (A1, A2))
    if gauge_tag != "landau_x":
        raise FieldError(f"unknown gauge {gauge_tag!r}")
    if field.is_polynomial:
        P = field.coeffs
        A2 = npoly.polyint(P, axis=0)
        A1 = np.zeros((1, 1))
        d2A2 = npoly.polyder(A2, axis=1)

        def ev(x, y):
            return _stack2(0 * x + 0 * y, _poly_eval(A2, x, y))

        def jc(x, y):
            z = 0 * x + 0 * y
            return _jacmat(z, z, _poly_eval(P, x, y) + z, _poly_eval(d2A2, x, y) + z)

        return VectorPotential(field, "landau_x", ev, jc, (A1, A2))

    def ev(x, y):
        x = np.asarray(x)[..., None]
        y = np.asarray(y)[..., None]
        a2 = x[..., 0] * np.sum(_GL01_W * field.eval_xy(x * _GL01_X, y + 0 * _GL01_X), axis=-1)
        return _stack2(0 * a2, a2)

    def jc(x, y):
        xs = np.asarray(x)[..., None]
        ys = np.asarray(y)[..., None]
        _, g2 = field.grad_xy(xs * _GL01_X, ys + 0 * _GL01_X)
        d2 = xs[..., 0] * np.sum(_GL01_W * g2, axis=-1)
        b = field.eval_xy(x, y)
        z = 0 * d2
        return _jacmat(z, z, b + z, d2)

    return VectorPotential(field, "landau_x", ev, jc, None)


def custom_potential(field: MagneticField, eval_fn, jac_fn) -> VectorPotential:
    """Wrap user callables ``eval_fn(q1, q2) -> (..., 2)`` and ``jac_fn``."""
    return VectorPotential(field, "custom", eval_fn, jac_fn, None)


def curl_residual(potential: VectorPotential, n: int = 101, h: float = 1e-3) -> float:
    """max |d1 A2 - d2 A1 - B| / (1 + |B|) on an n x n grid, 4th-order differences of A."""
    fld = potential.field
    X, Y = fld.sample_grid(n)
    A = potential.eval

    def d(comp, e1, e2):
        f = lambda s: A(np.stack([X + s * e1, Y + s * e2], -1))[..., comp]
        return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)

    curl = d(1, 1, 0) - d(0, 0, 1)
    B = fld.eval_xy(X, Y)
    return float(np.max(np.abs(curl - B) / (1 + np.abs(B))))


# ---------------------------------------------------------------------------
# Darboux chart


@dataclass(frozen=True)
class DarbouxChart:
    """z2 = g(q) = (q1, int_0^{q2} B(q1, s) ds).

    ``jac_det`` equals B. As a map into (x2, xi2) with the form
    d(xi2) ^ d(x2) it reverses orientation relative to B dq1 ^ dq2; the
    normal-form code compensates by using d(x2) ^ d(xi2) on the slow pair.
    """

    field: MagneticField

    @property
    def _F(self):
        return npoly.polyint(self.field.coeffs, axis=1)

    def xi2(self, q1, q2, check=True):
        fld = self.field
        if fld.is_polynomial:
            return _poly_eval(self._F, q1, q2) + 0 * q1
        q1a = np.asarray(q1)[..., None]
        q2a = np.asarray(q2)[..., None]
        vals = q2a[..., 0] * np.sum(_GL01_W * fld.eval_xy(q1a + 0 * _GL01_X, q2a * _GL01_X), axis=-1)
        if check:
            half = 0.5 * (
                np.sum(_GL01_W * fld.eval_xy(q1a + 0 * _GL01_X, q2a * 0.5 * _GL01_X), axis=-1)
                + np.sum(_GL01_W * fld.eval_xy(q1a + 0 * _GL01_X, q2a * (0.5 + 0.5 * _GL01_X)), axis=-1)
            )
            err = np.abs(q2a[..., 0] * half - vals)
            if np.any(err > 1e-12 * (1 + np.abs(vals))):
                raise ChartError("chart quadrature did not converge")
        return vals

    def forward(self, q):
        q = np.asarray(q)
        q1, q2 = q[..., 0], q[..., 1]
        return np.stack(np.broadcast_arrays(q1, self.xi2(q1, q2)), axis=-1)

    def jacobian(self, q):
        """d(x2, xi2)/d(q1, q2)."""
        q = np.asarray(q)
        q1, q2 = q[..., 0], q[..., 1]
        fld = self.field
        if fld.is_polynomial:
            d1 = _poly_eval(npoly.polyder(self._F, axis=0), q1, q2) + 0 * q2
        else:
            q1a = np.asarray(q1)[..., None]
            q2a = np.asarray(q2)[..., None]
            g1, _ = fld.grad_xy(q1a + 0 * _GL01_X, q2a * _GL01_X)
            d1 = q2a[..., 0] * np.sum(_GL01_W * g1, axis=-1)
        b = fld.eval_xy(q1, q2)
        one = np.ones_like(b)
        return _jacmat(one, 0 * b, d1, b)

    def jac_det(self, q):
        J = self.jacobian(q)
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]

    def solve_q2(self, q1, xi2, q2_init=None, check=True, tol=1e-14, maxit=60):
        """Invert s -> xi2(q1, s) by Newton; bracketed fallback for real stragglers."""
        q1 = np.asarray(q1)
        xi2 = np.asarray(xi2)
        q1, xi2 = np.broadcast_arrays(q1, xi2)
        cplx = np.iscomplexobj(q1) or np.iscomplexobj(xi2)
        if q2_init is None:
            s = xi2 / self.field.eval_xy(q1, 0 * q1)
        else:
            s = np.array(np.broadcast_to(q2_init, q1.shape), dtype=complex if cplx else float)
        s = np.array(s, dtype=complex if cplx else float)
        for _ in range(maxit):
            step = (self.xi2(q1, s, check=False) - xi2) / self.field.eval_xy(q1, s)
            s = s - step
            if np.all(np.abs(step) <= tol * (1 + np.abs(s))):
                break
        else:
            if cplx:
                raise ChartError("chart inverse did not converge")
            s = self._bracketed(q1, xi2, s, tol)
        if check and not cplx:
            (y0, y1) = self.field.domain_box[1]
            if np.any(s < y0 - 1e-9) or np.any(s > y1 + 1e-9):
                raise ChartError("chart inverse outside domain_box")
        return s

    def _bracketed(self, q1, xi2, s, tol):
        from scipy.optimize import brentq

        out = np.array(s, dtype=float)
        (y0, y1) = self.field.domain_box[1]
        flat_q1, flat_xi, flat_o = q1.ravel(), xi2.ravel(), out.ravel()
        for k in range(flat_o.size):
            f = lambda t: float(self.xi2(flat_q1[k], t, check=False)) - float(flat_xi[k])
            a, b = 2 * y0 - 1, 2 * y1 + 1
            if f(a) * f(b) > 0:
                raise ChartError("chart inverse outside domain_box")
            flat_o[k] = brentq(f, a, b, xtol=1e-15, rtol=4e-16)
        return flat_o.reshape(out.shape)

    def inverse(self, z2, check=True):
        z2 = np.asarray(z2)
        x2, xi2 = z2[..., 0], z2[..., 1]
        if check and not np.iscomplexobj(z2):
            (x0, x1) = self.field.domain_box[0]
            if np.any(x2 < x0 - 1e-9) or np.any(x2 > x1 + 1e-9):
                raise ChartError("chart inverse outside domain_box")
        q2 = self.solve_q2(x2, xi2, check=check)
        return np.stack(np.broadcast_arrays(x2, q2), axis=-1)


def darboux_chart(field: MagneticField) -> DarbouxChart:
    if field.min_on_box(41) <= 0:
        raise FieldError("chart needs B > 0 on the box")
    return DarbouxChart(field)


# ---------------------------------------------------------------------------
# zero-energy surface and its symplectic normal frame


def omega(X, Y):
    """omega((Q1,P1),(Q2,P2)) = <P1,Q2> - <P2,Q1> for vectors in R^4 (batched)."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    return np.sum(X[..., 2:] * Y[..., :2], -1) - np.sum(Y[..., 2:] * X[..., :2], -1)


OMEGA_MATRIX = np.block([[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]])


def hamiltonian_value(potential: VectorPotential, q, p):
    d = np.asarray(p) - potential.eval(q)
    return np.sum(d * d, axis=-1)


def sigma_embed(field: MagneticField, potential: VectorPotential, q) -> PhaseState:
    q = np.asarray(q, dtype=float)
    return PhaseState(q, potential.eval(q))


@dataclass(frozen=True)
class SymplecticFrame:
    u1: np.ndarray
    v1: np.ndarray


def frame_vectors(field, potential, q):
    """Batched (u1, v1), each of shape (..., 4)."""
    q = np.asarray(q)
    T = potential.jac(q)
    b = field(q)
    s = 1.0 / np.sqrt(b)
    one = np.ones_like(b)
    zero = np.zeros_like(b)
    u1 = np.stack([one, zero, T[..., 0, 0], T[..., 0, 1]], -1) * s[..., None]
    v1 = np.stack([zero, one, T[..., 1, 0], T[..., 1, 1]], -1) * s[..., None]
    return u1, v1


def frame_at(field: MagneticField, potential: VectorPotential, q) -> SymplecticFrame:
    q = np.asarray(q, dtype=float)
    b = float(field(q))
    if b == 0:
        raise FieldError("frame needs B(q) != 0")
    u1, v1 = frame_vectors(field, potential, q)
    return SymplecticFrame(u1, v1)


def sigma_tangent(potential: VectorPotential, q):
    """T j(e_k), k = 1, 2, as rows of a (2, 4) array."""
    T = potential.jac(np.asarray(q, dtype=float))
    return np.array([[1.0, 0.0, T[0, 0], T[1, 0]], [0.0, 1.0, T[0, 1], T[1, 1]]])


def transversal_hessian(field, potential, q, h: float = 1e-2) -> np.ndarray:
    """Second derivatives of H along (u1, v1) at j(q), Richardson-extrapolated differences."""
    q = np.asarray(q, dtype=float)
    if h <= 1e-8 * (1 + np.linalg.norm(q)):
        raise ValueError("finite-difference step underflow")
    fr = frame_at(field, potential, q)
    base = sigma_embed(field, potential, q).as_array()
    dirs = (fr.u1, fr.v1)

    def H(y):
        return float(hamiltonian_value(potential, y[:2], y[2:]))

    def second(hh):
        M = np.zeros((2, 2))
        for a in range(2):
            e = dirs[a]
            M[a, a] = (H(base + hh * e) - 2 * H(base) + H(base - hh * e)) / hh**2
        e, f = dirs
        M[0, 1] = M[1, 0] = (
            H(base + hh * (e + f)) - H(base + hh * (e - f)) - H(base - hh * (e - f)) + H(base - hh * (e + f))
        ) / (4 * hh**2)
        return M

    return (4 * second(h / 2) - second(h)) / 3
