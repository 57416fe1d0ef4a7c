"""Magnetic Laplacian (-i hbar grad - A)^2 on a grid, 1D Weyl quantization, spectral diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .fieldlab import MagneticField, VectorPotential, field_minimum

_GL3_X = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GL3_W = np.array([5.0, 8.0, 5.0]) / 9.0


class BoxTooSmall(ValueError):
    pass


class AliasingError(ValueError):
    pass


class EigenError(RuntimeError):
    pass


@dataclass
class Grid2D:
    box: tuple
    n: int
    h: float
    x: np.ndarray
    y: np.ndarray

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")


@dataclass
class DiscreteOperator:
    matrix: sp.spmatrix
    grid: object
    hbar: float
    kind: str
    meta: dict = dc_field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v):
        if self.kind == "magnetic_laplacian_2d" and "stencil" in self.meta:
            st = self.meta["stencil"]
            return kernels.stencil_apply(st["diag"], st["east"], st["north"], np.asarray(v, dtype=np.complex128), self.grid.n)
        return self.matrix @ v

    def min_rayleigh(self, rng, trials=5):
        """Smallest <Mu,u>/<u,u> over random complex vectors (non-negativity probe)."""
        best = np.inf
        for _ in range(trials):
            u = rng.normal(size=self.dimension) + 1j * rng.normal(size=self.dimension)
            best = min(best, float(np.vdot(u, self.apply(u)).real / np.vdot(u, u).real))
        return best

    def hermiticity_defect(self, rng, trials=5):
        worst = 0.0
        for _ in range(trials):
            u = rng.normal(size=self.dimension) + 1j * rng.normal(size=self.dimension)
            v = rng.normal(size=self.dimension) + 1j * rng.normal(size=self.dimension)
            lhs = np.vdot(self.apply(u), v)
            rhs = np.vdot(u, self.apply(v))
            worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v)))
        return worst


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray]
    residual_norms: np.ndarray
    discretization_error_estimate: Optional[np.ndarray] = None
    grid: object = None
    hbar: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residual_norms": [float(v) for v in self.residual_norms],
            "discretization_error_estimate": None
            if self.discretization_error_estimate is None
            else [float(v) for v in self.discretization_error_estimate],
            "hbar": float(self.hbar),
            "grid": None if self.grid is None else {"box": [list(map(float, b)) for b in self.grid.box], "n": int(self.grid.n), "h": float(self.grid.h)},
            "meta": self.meta,
        }


# ---------------------------------------------------------------------------
# assembly


def _square_box(box):
    (x0, x1), (y0, y1) = box
    return (float(x0), float(x1)), (float(y0), float(y1))


def check_well(field: MagneticField, box, hbar: float, threshold: float, samples: int = 241):
    """Raise BoxTooSmall unless {B <= threshold} sits inside the box with margin 2 sqrt(hbar / min B)."""
    (x0, x1), (y0, y1) = box
    bmin = max(field.min_on_box(), 1e-300)
    margin = 2.0 * np.sqrt(hbar / bmin)
    xs = np.linspace(x0, x1, samples)
    ys = np.linspace(y0, y1, samples)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = field.eval_xy(X, Y) <= threshold
    if not np.any(inside):
        return margin
    dist = np.minimum.reduce([X - x0, x1 - X, Y - y0, y1 - Y])
    if np.min(dist[inside]) < margin:
        raise BoxTooSmall(
            f"well region {{B <= {threshold:.4g}}} comes within {np.min(dist[inside]):.3g} of the boundary (need {margin:.3g})"
        )
    return margin


def assemble_magnetic_laplacian(
    field: MagneticField,
    potential: VectorPotential,
    hbar: float,
    box,
    n: int,
    *,
    well_threshold: Optional[float] = None,
    phases: bool = True,
    min_n: int = 64,
) -> DiscreteOperator:
    """Five-point stencil with Peierls link phases and Dirichlet boundary.

    The hop from site j to neighbour k carries exp(-(i/hbar) int_j^k A . dl),
    the line integral taken by 3-point Gauss-Legendre along the edge. Kinetic
    scale hbar^2 / h^2. ``n`` interior points per side of a square-celled box.
    ``well_threshold`` (default min B + 2 hbar) fixes the sublevel set that must
    fit in the box; ``phases=False`` gives the free Laplacian.
    """
    if n < min_n:
        raise ValueError(f"n must be at least {min_n}")
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    (x0, x1), (y0, y1) = _square_box(box)
    hx = (x1 - x0) / (n + 1)
    hy = (y1 - y0) / (n + 1)
    if abs(hx - hy) > 1e-12 * max(hx, hy):
        raise ValueError("box must have equal sides")
    h = hx
    if field.kind != "constant":
        # a constant field has no well; every sublevel set is the whole plane
        if well_threshold is None:
            well_threshold = field.min_on_box() + 2.0 * hbar
        check_well(field, ((x0, x1), (y0, y1)), hbar, well_threshold)
    x = x0 + h * np.arange(1, n + 1)
    y = y0 + h * np.arange(1, n + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    c = hbar**2 / h**2
    if phases:
        # east link (i, j) -> (i+1, j): int A1 dx ; north link (i, j) -> (i, j+1): int A2 dy
        ie = 0.0
        jn = 0.0
        for g, w in zip(_GL3_X, _GL3_W):
            qe = np.stack([X + 0.5 * h * (1 + g), Y], axis=-1)
            qn = np.stack([X, Y + 0.5 * h * (1 + g)], axis=-1)
            ie = ie + 0.5 * h * w * potential.eval(qe)[..., 0]
            jn = jn + 0.5 * h * w * potential.eval(qn)[..., 1]
        east = -c * np.exp(-1j * ie / hbar)
        north = -c * np.exp(-1j * jn / hbar)
    else:
        east = -c * np.ones((n, n), dtype=np.complex128)
        north = -c * np.ones((n, n), dtype=np.complex128)
    east[-1, :] = 0
    north[:, -1] = 0
    diag = np.full(n * n, 4.0 * c, dtype=np.complex128)
    idx = np.arange(n * n).reshape(n, n)
    rows_e = idx[:-1, :].ravel()
    cols_e = idx[1:, :].ravel()
    ve = east[:-1, :].ravel()
    rows_n = idx[:, :-1].ravel()
    cols_n = idx[:, 1:].ravel()
    vn = north[:, :-1].ravel()
    # M[k, j] for hop j -> k is -c exp(-(i/hbar) int_j^k A); M[j, k] its conjugate
    rows = np.concatenate([np.arange(n * n), cols_e, rows_e, cols_n, rows_n])
    cols = np.concatenate([np.arange(n * n), rows_e, cols_e, rows_n, cols_n])
    vals = np.concatenate([diag, ve, np.conj(ve), vn, np.conj(vn)])
    M = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))
    grid = Grid2D(((x0, x1), (y0, y1)), n, h, x, y)
    stencil = {"diag": diag.reshape(n, n), "east": east, "north": north}
    return DiscreteOperator(M, grid, hbar, "magnetic_laplacian_2d", {"stencil": stencil, "phases": phases})


def well_box(field: MagneticField, hbar: float, half_width: float = 9.0, center=None):
    """Square box of half-width ``half_width * sqrt(hbar)`` around the minimum of B."""
    if center is None:
        center, _ = field_minimum(field)
    L = half_width * np.sqrt(hbar)
    return ((center[0] - L, center[0] + L), (center[1] - L, center[1] + L))


# ---------------------------------------------------------------------------
# eigen-solves


def _shift_invert_op(M, sigma):
    A = (M - sigma * sp.identity(M.shape[0], format="csr", dtype=M.dtype)).tocsc()
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
    return spla.LinearOperator(M.shape, matvec=lu.solve, dtype=M.dtype)


def lowest_eigenpairs(
    op: DiscreteOperator,
    k: int,
    sigma: Optional[float] = None,
    *,
    tol: float = 1e-12,
    return_vectors: bool = True,
    residual_tol: float = 1e-8,
    maxiter: Optional[int] = None,
    ncv: Optional[int] = None,
) -> SpectralResult:
    """k eigenpairs nearest ``sigma`` (default 0, i.e. the lowest) by shift-invert Lanczos.

    Residuals |M v - lambda v| are checked against ``residual_tol`` |v|.
    The Krylov dimension defaults to max(4k + 8, 48). Landau-level clusters
    are degenerate to ~1e-10 and stall a subspace smaller than the cluster, so
    a failed run is retried once with a four times larger subspace.
    """
    if k < 1 or k >= op.dimension - 1:
        raise ValueError("k must satisfy 1 <= k < dimension - 1")
    M = op.matrix
    s = 0.0 if sigma is None else float(sigma)
    OPinv = _shift_invert_op(M, s)
    maxiter = maxiter if maxiter is not None else max(300, 20 * k)
    ncv = min(op.dimension - 1, ncv if ncv is not None else max(4 * k + 8, 48))
    for attempt in range(2):
        try:
            vals, vecs = spla.eigsh(M, k=k, sigma=s, which="LM", OPinv=OPinv, tol=tol, maxiter=maxiter, ncv=ncv)
            break
        except spla.ArpackNoConvergence as exc:
            if attempt == 1 or ncv >= op.dimension - 1:
                raise EigenError(f"eigensolver did not converge: {len(exc.eigenvalues)} of {k} pairs") from exc
            ncv = min(op.dimension - 1, 4 * ncv)
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    res = np.linalg.norm(M @ vecs - vecs * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    if np.any(res > residual_tol):
        raise EigenError(f"residual {np.max(res):.2e} exceeds {residual_tol:.1e}")
    return SpectralResult(
        vals.real,
        vecs if return_vectors else None,
        res,
        None,
        op.grid,
        op.hbar,
        {"sigma": s, "k": k, "ncv": ncv},
    )


def solve_with_estimate(
    field, potential, hbar, box, n, k, *, sigma=None, partner_factor=1.5, well_threshold=None, return_vectors=False
):
    """Eigenpairs at n plus a partner solve at round(n * partner_factor) for the error estimate.

    With O(h^2) convergence the error at n is about
    |lambda_n - lambda_partner| * h_n^2 / |h_n^2 - h_partner^2|.
    ``partner_factor < 1`` uses a cheaper coarse partner.
    """
    res = lowest_eigenpairs(
        assemble_magnetic_laplacian(field, potential, hbar, box, n, well_threshold=well_threshold),
        k,
        sigma,
        return_vectors=return_vectors,
    )
    npart = int(round(n * partner_factor))
    part = lowest_eigenpairs(
        assemble_magnetic_laplacian(field, potential, hbar, box, npart, well_threshold=well_threshold), k, sigma, return_vectors=False
    )
    h2 = res.grid.h**2
    hp2 = part.grid.h**2
    res.discretization_error_estimate = np.abs(res.eigenvalues - part.eigenvalues) * h2 / abs(h2 - hp2)
    res.meta["partner_eigenvalues"] = part.eigenvalues.tolist()
    res.meta["partner_n"] = npart
    return res


def richardson(values: Sequence[np.ndarray], hs: Sequence[float]):
    """Extrapolate eigenvalue arrays computed at spacings ``hs`` to h = 0 (error in powers of h^2)."""
    v = [np.asarray(a, dtype=float) for a in values]
    h2 = np.asarray(hs, dtype=float) ** 2
    if len(v) == 1:
        return v[0]
    if len(v) == 2:
        return (h2[0] * v[1] - h2[1] * v[0]) / (h2[0] - h2[1])
    # fit lambda(h) = a + b h^2 + c h^4 through the last three grids
    A = np.stack([np.ones(3), h2[-3:], h2[-3:] ** 2], axis=1)
    sol = np.linalg.solve(A, np.stack(v[-3:]))
    return sol[0]


# ---------------------------------------------------------------------------
# 1D Weyl quantization


@dataclass
class Grid1D:
    box: tuple
    n: int
    h: float
    x: np.ndarray
    xi: np.ndarray


def weyl_quantize_1d(
    symbol: Callable,
    hbar: float,
    box1d,
    n: int,
    *,
    window: Optional[float] = None,
) -> DiscreteOperator:
    """Dense Weyl quantization of symbol(x, xi) on n cell-centred points.

    Kernel K(x, y) = (2 pi hbar)^-1 int a((x + y)/2, xi) exp(i xi (x - y)/hbar) dxi,
    discretized with M = 2n momenta of spacing pi hbar / (n dx) so that every
    displacement x_j - x_k is represented without wrap-around; the result is
    symmetrized. AliasingError when the symbol on the boundary of the
    phase-space box [x0, x1] x [-pi hbar/dx, pi hbar/dx] is not at least
    ``window`` (default 10 hbar) above its interior minimum.
    """
    x0, x1 = float(box1d[0]), float(box1d[1])
    L = x1 - x0
    dx = L / n
    x = x0 + dx * (np.arange(n) + 0.5)
    M = 2 * n
    dxi = 2 * np.pi * hbar / (M * dx)
    l = np.fft.fftfreq(M, d=1.0 / M)  # 0, 1, ..., -1
    xi = l * dxi
    window = 10.0 * hbar if window is None else float(window)
    # midpoints (x_j + x_k)/2 live on a half grid
    mids = x0 + dx * (np.arange(2 * n - 1) / 2.0 + 0.5)
    vals = np.asarray(symbol(mids[:, None], xi[None, :]), dtype=float)
    if vals.shape != (mids.size, M):
        vals = np.broadcast_to(vals, (mids.size, M)).copy()
    xi_max = np.pi * hbar / dx
    xb = np.linspace(-xi_max, xi_max, 257)
    edge = np.concatenate(
        [
            np.ravel(symbol(np.full_like(xb, x0), xb)),
            np.ravel(symbol(np.full_like(xb, x1), xb)),
            np.ravel(symbol(mids, np.full_like(mids, xi_max))),
            np.ravel(symbol(mids, np.full_like(mids, -xi_max))),
        ]
    )
    interior_min = float(np.min(vals))
    if float(np.min(edge)) < interior_min + window:
        raise AliasingError("symbol is not resolved by the phase-space grid (raise n or widen the box)")
    # F[m, r] = (1/M) sum_l a(mid_m, xi_l) exp(2 pi i l r / M)
    F = np.fft.ifft(vals, axis=1)
    jj, kk = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mid_idx = jj + kk
    r = (jj - kk) % M
    H = F[mid_idx, r]
    H = 0.5 * (H + H.conj().T)
    grid = Grid1D((x0, x1), n, dx, x, xi)
    return DiscreteOperator(sp.csr_matrix(H), grid, hbar, "weyl_1d", {"dense": H})


def dense_eigenvalues(op: DiscreteOperator, k: Optional[int] = None):
    H = op.meta.get("dense")
    if H is None:
        H = op.matrix.toarray()
    w = np.linalg.eigvalsh(H)
    return w if k is None else w[:k]


# ---------------------------------------------------------------------------
# diagnostics


def counting_function(result: SpectralResult, threshold: float) -> int:
    return int(np.count_nonzero(np.asarray(result.eigenvalues) <= threshold))


def localization_profile(eigvec, field: MagneticField, grid: Grid2D, region_threshold: float) -> float:
    """Mass of |psi|^2 (normalized) at grid points where B > region_threshold."""
    v = np.asarray(eigvec)
    p = np.abs(v) ** 2
    p = p / np.sum(p)
    X, Y = grid.mesh()
    outside = (field.eval_xy(X, Y) > region_threshold).ravel()
    return float(np.sum(p[outside]))


def gap_statistics(result: SpectralResult, window) -> np.ndarray:
    lo, hi = float(window[0]), float(window[1])
    ev = np.sort(np.asarray(result.eigenvalues))
    sel = ev[(ev >= lo) & (ev <= hi)]
    return np.diff(sel)


def phase_volume(field: MagneticField, level: float, box=None, n: int = 1601) -> float:
    """int_{B <= level} B dq by midpoint sums over ``box`` (default the domain box)."""
    (x0, x1), (y0, y1) = field.domain_box if box is None else box
    hx = (x1 - x0) / n
    hy = (y1 - y0) / n
    xs = x0 + hx * (np.arange(n) + 0.5)
    ys = y0 + hy * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Bv = field.eval_xy(X, Y)
    return float(np.sum(np.where(Bv <= level, Bv, 0.0)) * hx * hy)
