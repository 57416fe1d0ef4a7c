"""Classical magnetic flow, guiding centers and comparison with the normal-form flow.

H(q, p) = |p - A(q)|^2, velocity qdot = 2 (p - A(q)). For B > 0 the fast
rotation is clockwise with angular velocity about -2B.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels
from ._accel import HAS_NUMBA
from .fieldlab import MagneticField, PhaseState, VectorPotential, darboux_chart

__all__ = [
    "PhaseState",
    "Trajectory",
    "GuidingRecord",
    "KTrajectory",
    "IntegrationError",
    "DomainError",
    "hamiltonian",
    "velocity",
    "integrate_H",
    "integrate_K",
    "guiding_center",
    "guiding_centers",
    "compare_flows",
    "flow_divergence",
    "integrate_ensemble",
    "mirror_points",
    "trajectory_table",
]

YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
YOSHIDA_W0 = -(2.0 ** (1.0 / 3.0)) * YOSHIDA_W1


class IntegrationError(RuntimeError):
    """Implicit stage failed to converge."""


class DomainError(RuntimeError):
    """Trajectory left the field's domain box."""


@dataclass
class Trajectory:
    times: np.ndarray
    y: np.ndarray  # (n, 4): q1, q2, p1, p2
    energy: np.ndarray
    integrator_tag: str
    step: float
    drift_bound: float

    def __post_init__(self):
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must increase")

    @property
    def states(self) -> List[PhaseState]:
        return [PhaseState(r[:2], r[2:]) for r in self.y]

    def state(self, i) -> PhaseState:
        return PhaseState(self.y[i, :2], self.y[i, 2:])

    def __len__(self):
        return self.times.size

    def relative_energy_drift(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / abs(e0)) if e0 != 0 else float(np.max(np.abs(self.energy)))


@dataclass(frozen=True)
class GuidingRecord:
    center: np.ndarray
    radius: float
    action: float
    field_at_center: float


def hamiltonian(field: MagneticField, potential: VectorPotential, s) -> float:
    y = s.as_array() if isinstance(s, PhaseState) else np.asarray(s, dtype=float)
    d = y[..., 2:] - potential.eval(y[..., :2])
    return np.sum(d * d, axis=-1) if y.ndim > 1 else float(np.sum(d * d))


def velocity(potential: VectorPotential, y):
    y = np.asarray(y, dtype=float)
    return 2.0 * (y[..., 2:] - potential.eval(y[..., :2]))


def _box(field):
    (x0, x1), (y0, y1) = field.domain_box
    return np.array([x0, x1, y0, y1], dtype=float)


def _generic_rhs(potential):
    def rhs(Y):
        q = Y[:, :2]
        u = Y[:, 2:] - potential.eval(q)
        T = potential.jac(q)
        pdot = 2.0 * np.einsum("mij,mi->mj", T, u)
        return np.concatenate([2 * u, pdot], axis=1)

    return rhs


def integrate_H(
    field: MagneticField,
    potential: VectorPotential,
    s0,
    T: float,
    dt: float,
    method: str = "implicit_midpoint",
    stride: int = 1,
    tol: float = 1e-13,
    maxit: int = 50,
    check_dt: bool = True,
    rtol: float = 1e-12,
    backward: bool = False,
) -> Trajectory:
    """Integrate Hamilton's equations for H = |p - A(q)|^2.

    methods: implicit_midpoint (fixed-point stages to ``tol``), midpoint4
    (4th-order symmetric composition of midpoint steps), boris (velocity
    form of the Lorentz equation), dop853 (adaptive reference).
    Samples every ``stride`` steps. ``backward`` integrates from s0 towards
    -T; times still hold the elapsed time.
    """
    if not (dt > 0 and T > 0):
        raise ValueError("dt and T must be positive")
    if check_dt and dt > 0.1 / field.max_on_box():
        raise ValueError("dt exceeds 0.1 / max B on the domain")
    y0 = s0.as_array() if isinstance(s0, PhaseState) else np.asarray(s0, dtype=float)
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * T:
        raise ValueError("T must be an integer multiple of dt")
    box = _box(field)
    times = dt * stride * np.arange(nsteps // stride + 1)
    h = -dt if backward else dt
    if method in ("implicit_midpoint", "midpoint4"):
        weights = np.array([1.0]) if method == "implicit_midpoint" else np.array([YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1])
        if potential.poly is not None and HAS_NUMBA:
            A1, A2 = (np.ascontiguousarray(a, dtype=float) for a in potential.poly)
            Y, done, status = kernels.midpoint_run_nb(A1, A2, y0.copy(), h, nsteps, stride, weights, tol, maxit, box)
        else:
            rhs = None if potential.poly is not None else _generic_rhs(potential)
            A1, A2 = potential.poly if potential.poly is not None else (None, None)
            Y, done, status = kernels.midpoint_run_np(A1, A2, y0[None], h, nsteps, stride, weights, tol, maxit, box, rhs)
            Y = Y[:, 0]
        _raise_status(status, done, dt)
        bound = 1e-8 if method == "implicit_midpoint" else 1e-10
    elif method == "boris":
        v0 = velocity(potential, y0)
        if field.is_polynomial and HAS_NUMBA:
            X, V, done, status = kernels.boris_run_nb(
                np.ascontiguousarray(field.coeffs, dtype=float), y0[:2].copy(), v0.copy(), h, nsteps, stride, box
            )
        else:
            X, V, done, status = kernels.boris_run_np(field, y0[None, :2], v0[None], h, nsteps, stride, box)
            X, V = X[:, 0], V[:, 0]
        _raise_status(status, done, dt)
        Y = np.concatenate([X, 0.5 * V + potential.eval(X)], axis=1)
        bound = 1e-12
    elif method == "dop853":
        rhs = _generic_rhs(potential)

        def f(t, y):
            return rhs(y[None])[0]

        def leave(t, y):
            return min(y[0] - box[0], box[1] - y[0], y[1] - box[2], box[3] - y[1])

        leave.terminal = True
        sgn = -1.0 if backward else 1.0
        sol = solve_ivp(f, (0.0, sgn * times[-1]), y0, method="DOP853", t_eval=sgn * times, rtol=rtol, atol=rtol * 1e-2, events=leave)
        if sol.status == 1:
            raise DomainError(f"trajectory left the domain box at t={sol.t_events[0][0]:.6g}")
        if not sol.success:
            raise IntegrationError(sol.message)
        Y = sol.y.T
        bound = 1e-9
    else:
        raise ValueError(f"unknown method {method!r}")
    E = hamiltonian(field, potential, Y)
    return Trajectory(times[: len(Y)], Y, E, method, dt, bound)


def _raise_status(status, done, dt):
    if status == 1:
        raise IntegrationError(f"implicit stage did not converge at t={done * dt:.6g}")
    if status == 2:
        raise DomainError(f"trajectory left the domain box at t={done * dt:.6g}")


def integrate_ensemble(field, potential, Y0, T, dt, method="implicit_midpoint", stride=1, tol=1e-13, maxit=50):
    """Vectorized numpy ensemble push (all members share the time grid)."""
    nsteps = int(round(T / dt))
    box = _box(field)
    weights = np.array([1.0]) if method == "implicit_midpoint" else np.array([YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1])
    rhs = None if potential.poly is not None else _generic_rhs(potential)
    A1, A2 = potential.poly if potential.poly is not None else (None, None)
    Y, done, status = kernels.midpoint_run_np(A1, A2, Y0, dt, nsteps, stride, weights, tol, maxit, box, rhs)
    _raise_status(status, done, dt)
    return Y


# ---------------------------------------------------------------------------
# guiding center


def guiding_centers(field: MagneticField, potential: VectorPotential, y):
    """Batched (center, radius, action, B(center)) for states y (..., 4).

    c = q - J qdot / (2 B(q)), J the +pi/2 rotation (the orbit turns
    clockwise when B > 0); radius |qdot| / (2 B(q)); action H / B(c).
    """
    y = np.asarray(y, dtype=float)
    q = y[..., :2]
    v = velocity(potential, y)
    b = field(q)
    Jv = np.stack([-v[..., 1], v[..., 0]], axis=-1)
    c = q - Jv / (2.0 * b[..., None])
    radius = np.linalg.norm(v, axis=-1) / (2.0 * b)
    bc = field(c)
    H = np.sum(0.25 * v * v, axis=-1)
    return c, radius, H / bc, bc


def guiding_center(field: MagneticField, potential: VectorPotential, s) -> GuidingRecord:
    y = s.as_array() if isinstance(s, PhaseState) else np.asarray(s, dtype=float)
    c, r, I, bc = guiding_centers(field, potential, y)
    return GuidingRecord(np.asarray(c), float(r), float(I), float(bc))


def trajectory_table(field, potential, traj: Trajectory):
    """Columns t, q1, q2, p1, p2, H, c1, c2, I, B_at_c."""
    c, _, I, bc = guiding_centers(field, potential, traj.y)
    return np.column_stack([traj.times, traj.y, traj.energy, c, I, bc])


TRAJECTORY_COLUMNS = ("t", "q1", "q2", "p1", "p2", "H", "c1", "c2", "I", "B_at_c")


# ---------------------------------------------------------------------------
# normal-form flow


@dataclass
class KTrajectory:
    times: np.ndarray
    z1: np.ndarray  # complex x1 + i xi1
    z2: np.ndarray  # (n, 2)
    action: float
    order: int

    def as_real(self):
        return np.column_stack([self.z1.real, self.z1.imag, self.z2])


def _parse_z0(z0):
    if isinstance(z0, tuple) and len(z0) == 2:
        z1 = complex(z0[0])
        z2 = np.asarray(z0[1], dtype=float).reshape(2)
    else:
        v = np.asarray(z0, dtype=float).reshape(4)
        z1 = complex(v[0], v[1])
        z2 = v[2:].copy()
    return z1, z2


def integrate_K(field: MagneticField, nf, z0, T: float, dt: float, order: Optional[int] = None, rtol: float = 1e-12):
    """Flow of K = I f(z2, I), I = |z1|^2 held fixed.

    f = B(g^-1(z2)) + sum_{2 <= m <= order/2} c_{0,m}(z2) I^(m-1); the first
    term is evaluated exactly through the chart, the others from their jets.
    The slow point follows xdot2 = -dK/dxi2, xidot2 = dK/dx2 and the phase
    of z1 obeys thetadot = -2 dK/dI. Integrated by DOP853.
    """
    order = nf.order[0] if order is None else int(order)
    if order < 2:
        raise ValueError("normal form order must be at least 2")
    z1_0, z2_0 = _parse_z0(z0)
    I = abs(z1_0) ** 2
    chart = darboux_chart(field)
    bp = nf.basepoint
    mmax = order // 2
    jets = [nf.plain_coeffs.get((0, m)) for m in range(2, mmax + 1)]
    nP = max((j.shape[0] for j in jets if j is not None), default=1)

    def jet_grad(j, s):
        from numpy.polynomial import polynomial as P

        return (
            P.polyval2d(s[0], s[1], j),
            P.polyval2d(s[0], s[1], P.polyder(j, axis=0)),
            P.polyval2d(s[0], s[1], P.polyder(j, axis=1)),
        )

    def parts(z2):
        q = chart.inverse(z2, check=False)
        b = float(field(q))
        g1, g2 = (float(v) for v in field.grad(q))
        J = chart.jacobian(q)
        d1xi = float(J[1, 0])
        bx = g1 - g2 * d1xi / b
        bxi = g2 / b
        s = z2 - bp
        f, fx, fxi, fI = b, bx, bxi, 0.0
        for m, j in zip(range(2, mmax + 1), jets):
            if j is None:
                continue
            v, vx, vxi = jet_grad(j, s)
            f += v * I ** (m - 1)
            fx += vx * I ** (m - 1)
            fxi += vxi * I ** (m - 1)
            fI += (m - 1) * v * I ** (m - 2)
        return f, fx, fxi, fI

    def rhs(t, y):
        f, fx, fxi, fI = parts(y[:2])
        return [-I * fxi, I * fx, -2.0 * (f + I * fI)]

    nsteps = int(round(T / dt))
    times = dt * np.arange(nsteps + 1)
    if I == 0:
        z2 = np.repeat(z2_0[None], times.size, axis=0)
        return KTrajectory(times, np.zeros(times.size, complex), z2, 0.0, order)
    (x0, x1), (y0, y1) = field.domain_box

    def leave(t, y):
        q = chart.inverse(y[:2], check=False)
        return min(q[0] - x0, x1 - q[0], q[1] - y0, y1 - q[1])

    leave.terminal = True
    sol = solve_ivp(
        rhs, (0.0, times[-1]), [z2_0[0], z2_0[1], 0.0], method="DOP853", t_eval=times, rtol=rtol, atol=rtol * 1e-2, events=leave
    )
    if sol.status == 1:
        raise DomainError("slow variables left the chart domain")
    if not sol.success:
        raise IntegrationError(sol.message)
    z1 = z1_0 * np.exp(1j * sol.y[2])
    return KTrajectory(sol.t, z1, sol.y[:2].T, I, order)


def compare_flows(trajH: Trajectory, trajK: KTrajectory, transform) -> np.ndarray:
    """Euclidean distance in (q, p) between phi_H^t and Phi_N o phi_K^t o Phi_N^-1."""
    if trajH.times.shape != trajK.times.shape or not np.allclose(trajH.times, trajK.times, rtol=0, atol=1e-9):
        raise ValueError("trajectories are sampled on different grids")
    mapped = transform.forward(trajK.as_real())
    return np.linalg.norm(mapped - trajH.y, axis=1)


def flow_divergence(field, potential, nf, transform, m0, T, dt, order=None, rtol=1e-12):
    """d(t) for a start m0 in (q, p): reference DOP853 flow vs the conjugated normal-form flow."""
    m0 = m0.as_array() if isinstance(m0, PhaseState) else np.asarray(m0, dtype=float)
    z0 = transform.inverse(m0)
    order = transform.order if order is None else order
    tk = integrate_K(field, nf, z0, T, dt, order=order, rtol=rtol)
    th = integrate_H(field, potential, m0, T, dt, method="dop853", check_dt=False, rtol=rtol)
    return th.times, compare_flows(th, tk, transform)


# ---------------------------------------------------------------------------
# mirror points


@dataclass(frozen=True)
class MirrorEvent:
    time: float
    center: np.ndarray
    kind: str  # "max" or "min" of the projected drift coordinate


def mirror_points(traj: Trajectory, field: MagneticField, potential: VectorPotential, direction=None, prominence=None):
    """Turning points of the gyro-averaged center projected on ``direction``.

    ``direction`` defaults to the drift direction at the initial center
    (J grad B). The center is averaged over one gyro period before the
    extrema are located.
    """
    from scipy.signal import find_peaks

    c, _, _, bc = guiding_centers(field, potential, traj.y)
    if direction is None:
        g = np.asarray(field.grad(c[0]), dtype=float)
        direction = np.array([-g[1], g[0]])
        if np.linalg.norm(direction) < 1e-12:
            return []
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    proj = c @ e
    dt = traj.times[1] - traj.times[0]
    period = np.pi / float(np.median(bc))
    w = max(1, int(round(period / dt)))
    if proj.size <= w:
        return []
    kern = np.ones(w) / w
    avg = np.convolve(proj, kern, mode="valid")
    t_avg = traj.times[w // 2 : w // 2 + avg.size]
    spread = float(np.ptp(avg))
    if prominence is None:
        prominence = max(0.25 * spread, 1e-9)
    if spread < 1e-9:
        return []
    events = []
    for sign, kind in ((1, "max"), (-1, "min")):
        idx, _ = find_peaks(sign * avg, prominence=prominence)
        for i in idx:
            events.append(MirrorEvent(float(t_avg[i]), c[i + w // 2], kind))
    events.sort(key=lambda ev: ev.time)
    return events
