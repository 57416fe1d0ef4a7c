"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Kernel rows call both implementations directly. ``--end-to-end`` also runs a
short fig2 trajectory in two subprocesses, with MAGWELL_NUMBA=1 and =0, to
show what the environment flag changes for a user.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from magwell import kernels
from magwell._accel import HAS_NUMBA
from magwell.fieldlab import build_potential, make_field
from magwell.starbirk.series import series_shape


def best_of(fn, repeat):
    fn()  # warm-up (numba compile)
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return min(ts)


def cases():
    rng = np.random.default_rng(0)
    N1, N2 = 8, 6
    m = kernels.graded_mask(N1, N2)
    a = (rng.normal(size=series_shape(N1, N2)) * m).astype(complex)
    b = (rng.normal(size=series_shape(N1, N2)) * m).astype(complex)
    yield "moyal (8, 6)", lambda: kernels.moyal_nb(a, b, N1, N2, 1), lambda: kernels.moyal_np(a, b, N1, N2, 1)

    F = make_field("fig2")
    A1, A2 = (np.ascontiguousarray(c, dtype=float) for c in build_potential(F).poly)
    y0 = np.array([0.5, 0.0, 0.1, 0.4])
    box = np.array([-5.0, 5.0, -5.0, 5.0])
    w = np.array([1.0])
    steps = 20000
    yield (
        f"implicit midpoint, {steps} steps",
        lambda: kernels.midpoint_run_nb(A1, A2, y0.copy(), 1e-3, steps, 100, w, 1e-14, 50, box),
        lambda: kernels.midpoint_run_np(A1, A2, y0[None], 1e-3, steps, 100, w, 1e-14, 50, box),
    )
    Bc = np.ascontiguousarray(F.coeffs, dtype=float)
    x0, v0 = y0[:2].copy(), np.array([0.0, 0.4])
    yield (
        f"boris, {steps} steps",
        lambda: kernels.boris_run_nb(Bc, x0, v0, 1e-3, steps, 100, box),
        lambda: kernels.boris_run_np(F, x0[None], v0[None], 1e-3, steps, 100, box),
    )
    exps = rng.integers(0, 6, size=(200, 4)).astype(np.int64)
    coefs = rng.normal(size=(200, 4))
    Z = rng.uniform(-0.3, 0.3, size=(5000, 4))
    bp = np.zeros(2)
    yield (
        "polynomial vector field, 5000 points",
        lambda: kernels.poly_field_nb(exps, coefs, Z, bp),
        lambda: kernels.poly_field_np(exps, coefs, Z, bp),
    )
    n = 1024
    diag = np.full((n, n), 4.0 + 0j)
    east = np.exp(1j * rng.uniform(0, 6, size=(n, n)))
    north = np.exp(1j * rng.uniform(0, 6, size=(n, n)))
    v = rng.normal(size=n * n) + 0j
    yield (
        "stencil matvec, 1024^2",
        lambda: kernels.stencil_apply_nb(diag, east, north, v, n),
        lambda: kernels.stencil_apply_np(diag, east, north, v, n),
    )


SNIPPET = """
import time
from magwell.benchcli.criteria import start_state
from magwell.fieldlab import build_potential, make_field
from magwell.symflow import integrate_H
F = make_field("fig2"); A = build_potential(F)
y0 = start_state(F, A, (0.5, 0.0), 0.05)
integrate_H(F, A, y0, 1.0, 1e-3, method="implicit_midpoint")
t = time.perf_counter()
integrate_H(F, A, y0, 50.0, 1e-3, method="implicit_midpoint", stride=100)
print(time.perf_counter() - t)
"""


def end_to_end():
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, MAGWELL_NUMBA=flag)
        r = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True)
        out[flag] = float(r.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--end-to-end", action="store_true")
    args = p.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is disabled (MAGWELL_NUMBA=0 or not installed); nothing to compare")
        return 1
    print(f"{'kernel':40s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speed-up':>9s}")
    for name, fnb, fnp in cases():
        tn = best_of(fnb, args.repeat)
        tp = best_of(fnp, max(1, args.repeat // 2))
        print(f"{name:40s} {tn:11.4g} {tp:11.4g} {tp / tn:9.1f}")
    if args.end_to_end:
        t = end_to_end()
        print(f"\nintegrate_H, fig2, T = 50, dt = 1e-3: MAGWELL_NUMBA=1 {t['1']:.3g} s, MAGWELL_NUMBA=0 {t['0']:.3g} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
