"""Hot kernels with numba and pure-numpy implementations.

Every kernel exists twice: ``*_nb`` (compiled when numba is importable and
``MAGWELL_NUMBA`` is not 0) and ``*_np``. The un-suffixed names pick one
according to :data:`magwell._accel.HAS_NUMBA`.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve

from ._accel import HAS_NUMBA, njit

# ---------------------------------------------------------------------------
# Moyal product on dense graded arrays c[alpha, beta, l, g1, g2]
#
# a * b = sum_k (i hbar / 2)^k / (k1! k2! k3! k4!) (-1)^(k2 + k3)
#         (dx1^k1 dxi1^k2 dx2^k3 dxi2^k4 a) (dxi1^k1 dx1^k2 dxi2^k3 dx2^k4 b)
# The slow pair enters with reversed sign (its form is dx2 ^ dxi2).
# mode 0: product. mode 1: i/hbar (a*b - b*a), odd k only.

_FACT = np.array([math.factorial(n) for n in range(24)], dtype=np.float64)


@njit(cache=True)
def _moyal_nb(ia, va, ib, vb, N1, N2, mode, fact):
    nl = N1 // 2 + 1
    out = np.zeros((N1 + 1, N1 + 1, nl, N2 + 1, N2 + 1), dtype=np.complex128)
    shift = 2 if mode == 1 else 0
    for p in range(ia.shape[0]):
        aa, ba, la, g1a, g2a = ia[p, 0], ia[p, 1], ia[p, 2], ia[p, 3], ia[p, 4]
        da = aa + ba + 2 * la
        ca = va[p]
        for r in range(ib.shape[0]):
            ab, bb, lb, g1b, g2b = ib[r, 0], ib[r, 1], ib[r, 2], ib[r, 3], ib[r, 4]
            db = ab + bb + 2 * lb
            if da + db - shift > N1:
                continue
            cab = ca * vb[r]
            for k1 in range(min(aa, bb) + 1):
                for k2 in range(min(ba, ab) + 1):
                    for k3 in range(min(g1a, g2b) + 1):
                        for k4 in range(min(g2a, g1b) + 1):
                            k = k1 + k2 + k3 + k4
                            if mode == 1 and k % 2 == 0:
                                continue
                            deg = da + db + 2 * (k3 + k4) - shift
                            if deg > N1:
                                continue
                            o1 = g1a - k3 + g1b - k4
                            o2 = g2a - k4 + g2b - k3
                            if o1 + o2 > N2:
                                continue
                            oa = aa - k1 + ab - k2
                            ob = ba - k2 + bb - k1
                            ol = la + lb + k - (1 if mode == 1 else 0)
                            w = (
                                fact[aa] / fact[aa - k1]
                                * fact[ba] / fact[ba - k2]
                                * fact[g1a] / fact[g1a - k3]
                                * fact[g2a] / fact[g2a - k4]
                                * fact[bb] / fact[bb - k1]
                                * fact[ab] / fact[ab - k2]
                                * fact[g2b] / fact[g2b - k3]
                                * fact[g1b] / fact[g1b - k4]
                                / (fact[k1] * fact[k2] * fact[k3] * fact[k4])
                                / 2.0**k
                            )
                            if (k2 + k3) % 2 == 1:
                                w = -w
                            # i^k, times 2i for the commutator mode
                            km = k % 4
                            if mode == 1:
                                km = (km + 1) % 4
                                w = 2.0 * w
                            if km == 0:
                                ph = 1.0 + 0.0j
                            elif km == 1:
                                ph = 0.0 + 1.0j
                            elif km == 2:
                                ph = -1.0 + 0.0j
                            else:
                                ph = 0.0 - 1.0j
                            out[oa, ob, ol, o1, o2] += w * ph * cab
    return out


def _deriv(c, axis, k):
    """k-th derivative along ``axis`` of a dense coefficient array."""
    if k == 0:
        return c
    n = c.shape[axis]
    if k >= n:
        shp = list(c.shape)
        shp[axis] = 1
        return np.zeros(shp, dtype=c.dtype)
    idx = np.arange(k, n)
    scale = _FACT[idx] / _FACT[idx - k]
    shp = [1] * c.ndim
    shp[axis] = n - k
    return np.take(c, idx, axis=axis) * scale.reshape(shp)


def _moyal_np(a, b, N1, N2, mode):
    nl = N1 // 2 + 1
    out = np.zeros((N1 + 1, N1 + 1, nl, N2 + 1, N2 + 1), dtype=np.complex128)
    if not (np.any(a) and np.any(b)):
        return out
    shift = 1 if mode == 1 else 0
    kmax = N1 // 2 + shift
    for k1 in range(kmax + 1):
        for k2 in range(kmax + 1 - k1):
            for k3 in range(kmax + 1 - k1 - k2):
                for k4 in range(kmax + 1 - k1 - k2 - k3):
                    k = k1 + k2 + k3 + k4
                    if mode == 1 and k % 2 == 0:
                        continue
                    ol = k - shift
                    if 2 * ol > N1:
                        continue
                    da = _deriv(_deriv(_deriv(_deriv(a, 0, k1), 1, k2), 3, k3), 4, k4)
                    db = _deriv(_deriv(_deriv(_deriv(b, 1, k1), 0, k2), 4, k3), 3, k4)
                    if not (np.any(da) and np.any(db)):
                        continue
                    w = (1j / 2.0) ** k / (_FACT[k1] * _FACT[k2] * _FACT[k3] * _FACT[k4])
                    if (k2 + k3) % 2 == 1:
                        w = -w
                    if mode == 1:
                        w = 2j * w
                    prod = fftconvolve(da, db)
                    s = prod.shape
                    na = min(s[0], N1 + 1)
                    nb = min(s[1], N1 + 1)
                    nh = min(s[2], nl - ol)
                    n1 = min(s[3], N2 + 1)
                    n2 = min(s[4], N2 + 1)
                    if nh <= 0:
                        continue
                    out[:na, :nb, ol : ol + nh, :n1, :n2] += w * prod[:na, :nb, :nh, :n1, :n2]
    # drop what the grading or slow truncation excludes
    out *= graded_mask(N1, N2)
    return out


_MASKS = {}


def graded_mask(N1, N2):
    key = (N1, N2)
    if key not in _MASKS:
        a = np.arange(N1 + 1)
        l = np.arange(N1 // 2 + 1)
        g = np.arange(N2 + 1)
        fast = (a[:, None, None] + a[None, :, None] + 2 * l[None, None, :]) <= N1
        slow = (g[:, None] + g[None, :]) <= N2
        _MASKS[key] = fast[:, :, :, None, None] & slow[None, None, None, :, :]
    return _MASKS[key]


def moyal_nb(a, b, N1, N2, mode=0):
    ia = np.argwhere(a != 0).astype(np.int64)
    ib = np.argwhere(b != 0).astype(np.int64)
    va = a[tuple(ia.T)].astype(np.complex128)
    vb = b[tuple(ib.T)].astype(np.complex128)
    return _moyal_nb(ia, va, ib, vb, N1, N2, mode, _FACT)


def moyal_np(a, b, N1, N2, mode=0):
    out = _moyal_np(a.astype(np.complex128), b.astype(np.complex128), N1, N2, mode)
    # FFT round-off leaves dust where the exact kernel has structural zeros
    scale = max(np.max(np.abs(a)), 1e-300) * max(np.max(np.abs(b)), 1e-300)
    out[np.abs(out) < 1e-15 * scale] = 0
    return out


def moyal_dense(a, b, N1, N2, mode=0):
    if HAS_NUMBA:
        return moyal_nb(a, b, N1, N2, mode)
    return moyal_np(a, b, N1, N2, mode)


# ---------------------------------------------------------------------------
# particle pushers for H = |p - A(q)|^2 with polynomial A = (A1, A2)
#
# Coefficient matrices C[i, j] multiply x^i y^j.


@njit(cache=True)
def _poly_vgrad_nb(C, x, y):
    ni, nj = C.shape
    v = 0.0
    dx = 0.0
    dy = 0.0
    for i in range(ni):
        xi = x**i
        xim = x ** (i - 1) if i > 0 else 0.0
        for j in range(nj):
            c = C[i, j]
            if c == 0.0:
                continue
            yj = y**j
            v += c * xi * yj
            if i > 0:
                dx += c * i * xim * yj
            if j > 0:
                dy += c * j * xi * y ** (j - 1)
    return v, dx, dy


@njit(cache=True)
def _rhs_nb(A1, A2, y, out):
    a1, a1x, a1y = _poly_vgrad_nb(A1, y[0], y[1])
    a2, a2x, a2y = _poly_vgrad_nb(A2, y[0], y[1])
    u1 = y[2] - a1
    u2 = y[3] - a2
    out[0] = 2.0 * u1
    out[1] = 2.0 * u2
    out[2] = 2.0 * (a1x * u1 + a2x * u2)
    out[3] = 2.0 * (a1y * u1 + a2y * u2)


@njit(cache=True)
def _midpoint_step_nb(A1, A2, y, h, tol, maxit):
    f = np.empty(4)
    _rhs_nb(A1, A2, y, f)
    yn = y + h * f
    mid = np.empty(4)
    for it in range(maxit):
        for k in range(4):
            mid[k] = 0.5 * (y[k] + yn[k])
        _rhs_nb(A1, A2, mid, f)
        err = 0.0
        scale = 0.0
        for k in range(4):
            new = y[k] + h * f[k]
            d = abs(new - yn[k])
            if d > err:
                err = d
            if abs(new) > scale:
                scale = abs(new)
            yn[k] = new
        if err <= tol * (1.0 + scale):
            return yn, it + 1
    return yn, -1


@njit(cache=True)
def midpoint_run_nb(A1, A2, y0, h, nsteps, stride, weights, tol, maxit, box):
    nout = nsteps // stride + 1
    out = np.empty((nout, 4))
    y = y0.copy()
    out[0] = y
    status = 0
    k = 1
    for n in range(1, nsteps + 1):
        for w in weights:
            y, it = _midpoint_step_nb(A1, A2, y, w * h, tol, maxit)
            if it < 0:
                return out[:k], n, 1
        if y[0] < box[0] or y[0] > box[1] or y[1] < box[2] or y[1] > box[3]:
            return out[:k], n, 2
        if n % stride == 0:
            out[k] = y
            k += 1
    return out, nsteps, status


def _poly_vgrad_np(C, x, y):
    from numpy.polynomial import polynomial as P

    v = P.polyval2d(x, y, C)
    dx = P.polyval2d(x, y, P.polyder(C, axis=0)) if C.shape[0] > 1 else 0 * x
    dy = P.polyval2d(x, y, P.polyder(C, axis=1)) if C.shape[1] > 1 else 0 * x
    return v, dx, dy


def rhs_np(A1, A2, Y):
    """Vectorized Hamilton field for an ensemble Y of shape (m, 4)."""
    x, y = Y[:, 0], Y[:, 1]
    a1, a1x, a1y = _poly_vgrad_np(A1, x, y)
    a2, a2x, a2y = _poly_vgrad_np(A2, x, y)
    u1 = Y[:, 2] - a1
    u2 = Y[:, 3] - a2
    return np.stack([2 * u1, 2 * u2, 2 * (a1x * u1 + a2x * u2), 2 * (a1y * u1 + a2y * u2)], axis=1)


def midpoint_run_np(A1, A2, Y0, h, nsteps, stride, weights, tol, maxit, box, rhs=None):
    """Ensemble implicit midpoint (optionally composed with ``weights``).

    Returns (samples[nout, m, 4], steps_done, status) with status 0 ok,
    1 stage iteration failed, 2 left the box.
    """
    rhs = rhs or (lambda Y: rhs_np(A1, A2, Y))
    Y = np.array(Y0, dtype=float, ndmin=2)
    nout = nsteps // stride + 1
    out = np.empty((nout, Y.shape[0], 4))
    out[0] = Y
    k = 1
    for n in range(1, nsteps + 1):
        for w in weights:
            hh = w * h
            Yn = Y + hh * rhs(Y)
            for _ in range(maxit):
                new = Y + hh * rhs(0.5 * (Y + Yn))
                err = np.max(np.abs(new - Yn), axis=1)
                scale = np.max(np.abs(new), axis=1)
                Yn = new
                if np.all(err <= tol * (1 + scale)):
                    break
            else:
                return out[:k], n, 1
            Y = Yn
        if (
            np.any(Y[:, 0] < box[0])
            or np.any(Y[:, 0] > box[1])
            or np.any(Y[:, 1] < box[2])
            or np.any(Y[:, 1] > box[3])
        ):
            return out[:k], n, 2
        if n % stride == 0:
            out[k] = Y
            k += 1
    return out, nsteps, 0


@njit(cache=True)
def boris_run_nb(Bc, x0, v0, h, nsteps, stride, box):
    """Velocity form dv/dt = 2 B(q) (v2, -v1); drift-rotate-drift."""
    nout = nsteps // stride + 1
    X = np.empty((nout, 2))
    V = np.empty((nout, 2))
    x = x0.copy()
    v = v0.copy()
    X[0] = x
    V[0] = v
    k = 1
    for n in range(1, nsteps + 1):
        x = x + 0.5 * h * v
        b, _, _ = _poly_vgrad_nb(Bc, x[0], x[1])
        t = b * h
        s = 2.0 * t / (1.0 + t * t)
        c = (1.0 - t * t) / (1.0 + t * t)
        # rotation by -2 arctan(B h)
        v = np.array([c * v[0] + s * v[1], -s * v[0] + c * v[1]])
        x = x + 0.5 * h * v
        if x[0] < box[0] or x[0] > box[1] or x[1] < box[2] or x[1] > box[3]:
            return X[:k], V[:k], n, 2
        if n % stride == 0:
            X[k] = x
            V[k] = v
            k += 1
    return X, V, nsteps, 0


def boris_run_np(Bfun, X0, V0, h, nsteps, stride, box):
    X = np.array(X0, dtype=float, ndmin=2)
    V = np.array(V0, dtype=float, ndmin=2)
    nout = nsteps // stride + 1
    Xo = np.empty((nout,) + X.shape)
    Vo = np.empty((nout,) + V.shape)
    Xo[0] = X
    Vo[0] = V
    k = 1
    for n in range(1, nsteps + 1):
        X = X + 0.5 * h * V
        t = Bfun(X) * h
        s = 2 * t / (1 + t * t)
        c = (1 - t * t) / (1 + t * t)
        V = np.stack([c * V[:, 0] + s * V[:, 1], -s * V[:, 0] + c * V[:, 1]], axis=1)
        X = X + 0.5 * h * V
        if (
            np.any(X[:, 0] < box[0])
            or np.any(X[:, 0] > box[1])
            or np.any(X[:, 1] < box[2])
            or np.any(X[:, 1] > box[3])
        ):
            return Xo[:k], Vo[:k], n, 2
        if n % stride == 0:
            Xo[k] = X
            Vo[k] = V
            k += 1
    return Xo, Vo, nsteps, 0


# ---------------------------------------------------------------------------
# sparse polynomial vector fields in z = (x1, xi1, x2, xi2)
#
# A field is given by term lists (exps[t, 4], coefs[t, 4]): term t contributes
# coefs[t, k] * x1^e0 xi1^e1 s1^e2 s2^e3 to component k, s = z2 - basepoint.


@njit(cache=True)
def poly_field_nb(exps, coefs, Z, bp):
    n = Z.shape[0]
    out = np.zeros((n, 4))
    emax = 0
    for t in range(exps.shape[0]):
        for k in range(4):
            if exps[t, k] > emax:
                emax = exps[t, k]
    pw = np.empty((4, emax + 1))
    for p in range(n):
        v0 = Z[p, 0]
        v1 = Z[p, 1]
        v2 = Z[p, 2] - bp[0]
        v3 = Z[p, 3] - bp[1]
        for k in range(4):
            pw[k, 0] = 1.0
        for e in range(1, emax + 1):
            pw[0, e] = pw[0, e - 1] * v0
            pw[1, e] = pw[1, e - 1] * v1
            pw[2, e] = pw[2, e - 1] * v2
            pw[3, e] = pw[3, e - 1] * v3
        for t in range(exps.shape[0]):
            m = pw[0, exps[t, 0]] * pw[1, exps[t, 1]] * pw[2, exps[t, 2]] * pw[3, exps[t, 3]]
            for k in range(4):
                out[p, k] += coefs[t, k] * m
    return out


def poly_field_np(exps, coefs, Z, bp):
    Z = np.asarray(Z, dtype=float)
    V = [Z[:, 0], Z[:, 1], Z[:, 2] - bp[0], Z[:, 3] - bp[1]]
    emax = int(exps.max()) if exps.size else 0
    pw = [np.stack([v**e for e in range(emax + 1)]) for v in V]
    mono = pw[0][exps[:, 0]] * pw[1][exps[:, 1]] * pw[2][exps[:, 2]] * pw[3][exps[:, 3]]
    return mono.T @ coefs


def poly_field(exps, coefs, Z, bp):
    if HAS_NUMBA:
        return poly_field_nb(exps, coefs, np.ascontiguousarray(Z, dtype=float), np.asarray(bp, dtype=float))
    return poly_field_np(exps, coefs, Z, bp)


# --- five-point magnetic stencil -------------------------------------------------
# (Mv)[i,j] = d[i,j] v[i,j] + e[i,j] v[i+1,j]... with e the hop weight on the
# east link (i,j)->(i+1,j) entering row (i+1,j); rows see conj for the reverse hop.


@njit(cache=True)
def stencil_apply_nb(diag, east, north, v, n):
    out = np.empty(n * n, dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            k = i * n + j
            s = diag[i, j] * v[k]
            if i + 1 < n:
                s += np.conj(east[i, j]) * v[k + n]
            if i > 0:
                s += east[i - 1, j] * v[k - n]
            if j + 1 < n:
                s += np.conj(north[i, j]) * v[k + 1]
            if j > 0:
                s += north[i, j - 1] * v[k - 1]
            out[k] = s
    return out


def stencil_apply_np(diag, east, north, v, n):
    V = v.reshape(n, n)
    out = diag * V
    out[:-1, :] += np.conj(east[:-1, :]) * V[1:, :]
    out[1:, :] += east[:-1, :] * V[:-1, :]
    out[:, :-1] += np.conj(north[:, :-1]) * V[:, 1:]
    out[:, 1:] += north[:, :-1] * V[:, :-1]
    return out.ravel()


def stencil_apply(diag, east, north, v, n):
    if HAS_NUMBA:
        return stencil_apply_nb(diag, east, north, np.ascontiguousarray(v), n)
    return stencil_apply_np(diag, east, north, v, n)
