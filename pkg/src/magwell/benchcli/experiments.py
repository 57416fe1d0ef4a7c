"""The six experiments behind the CLI. Each returns (exit_code, summary dict)."""
from __future__ import annotations

import json
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from ..fieldlab import FieldError, build_potential, darboux_chart, field_minimum
from ..starbirk.birkhoff import NormalFormError, build_transform, normal_form
from ..symflow import TRAJECTORY_COLUMNS, flow_divergence, guiding_centers, integrate_H, trajectory_table
from .. import specwell as S
from . import criteria as C
from .config import ExperimentConfig
from .svg import SvgPlot, padded


# ---------------------------------------------------------------------------
# output helpers


def atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if np.isfinite(f) else str(f)
    return o


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _tag(x) -> str:
    return format(float(x), "g")


def _level_contours(plot, field, xlim, ylim, values, n=161):
    xs = np.linspace(*xlim, n)
    ys = np.linspace(*ylim, n)
    X, Y = np.meshgrid(xs, ys)
    plot.contours(X, Y, field.eval_xy(X, Y), values)


# ---------------------------------------------------------------------------
# trajectory


def run_trajectory(cfg: ExperimentConfig, out: Path):
    F = cfg.make_field()
    A = build_potential(F, cfg.gauge)
    center = np.asarray(cfg.q0, float)
    devs = []
    plot = None
    for i, E in enumerate(cfg.energies):
        y0 = C.start_state(F, A, center, E)
        tr = integrate_H(F, A, y0, cfg.T, cfg.dt, method=cfg.method, stride=cfg.stride)
        tab = trajectory_table(F, A, tr)
        atomic_write(out / f"trajectory_E{_tag(E)}.csv", csv_text(TRAJECTORY_COLUMNS, tab))
        bc = tab[:, -1]
        devs.append(float(np.max(np.abs(bc - bc[0]))))
        if i == 0:
            q = tr.y[:, :2]
            c = tab[:, 6:8]
            xl = padded(q[:, 0].min(), q[:, 0].max(), 0.15)
            yl = padded(q[:, 1].min(), q[:, 1].max(), 0.15)
            plot = SvgPlot(xl, yl, title=f"trajectory, E = {_tag(E)}", xlabel="q1", ylabel="q2")
            b0 = F.eval_xy(*center)
            _level_contours(plot, F, xl, yl, sorted({b0 * s for s in (0.9, 0.95, 1.0, 1.05, 1.1)}))
            plot.polyline(q[:, 0], q[:, 1], label="q(t)", width=0.6)
            plot.polyline(c[:, 0], c[:, 1], label="guiding center", width=1.5)
    rows = [[E, d] for E, d in zip(cfg.energies, devs)]
    atomic_write(out / "deviation_vs_E.csv", csv_text(["E", "max_level_set_deviation"], rows))
    summary = {"energies": cfg.energies, "deviation": devs, "method": cfg.method}
    if len(cfg.energies) >= 2 and all(d > 0 for d in devs):
        summary["fitted_slope"] = C.loglog_slope(cfg.energies, devs)
    atomic_write(out / "trajectory.svg", plot.render())
    atomic_write(out / "trajectory_summary.json", json_text(summary))
    return 0, summary


# ---------------------------------------------------------------------------
# compare-flows


def run_compare_flows(cfg: ExperimentConfig, out: Path):
    F = cfg.make_field()
    A = build_potential(F, cfg.gauge)
    q0 = np.asarray(cfg.q0, float)
    bp = darboux_chart(F).forward(q0)
    nf = normal_form(F, cfg.N1, cfg.N2, potential=A, basepoint=bp, with_eig=False)
    curves, final = {}, {}
    times = None
    for N in cfg.orders:
        tr = build_transform(F, nf, N, potential=A)
        for e in cfg.eps:
            m0 = np.concatenate([q0, np.array([np.sqrt(e), 0.0]) + A.eval(q0)])
            t, d = flow_divergence(F, A, nf, tr, m0, cfg.T, cfg.dt)
            times = t
            curves[(N, e)] = d
            final[(N, e)] = float(d[-1])
    header = ["t"] + [f"d_N{N}_eps{_tag(e)}" for N in cfg.orders for e in cfg.eps]
    rows = np.column_stack([times] + [curves[(N, e)] for N in cfg.orders for e in cfg.eps])
    atomic_write(out / "divergence.csv", csv_text(header, rows[:: max(1, cfg.stride)]))
    orows, orders = [], {}
    for N in cfg.orders:
        d = [final[(N, e)] for e in cfg.eps]
        p = C.loglog_slope(cfg.eps, d) if len(cfg.eps) >= 2 else float("nan")
        orders[N] = p
        orows.append([N] + d + [p, (N - 1) / 2 - 0.3])
    atomic_write(
        out / "orders.csv",
        csv_text(["N"] + [f"d_T_eps{_tag(e)}" for e in cfg.eps] + ["empirical_order", "required"], orows),
    )
    allv = np.concatenate([v[1:] for v in curves.values()])
    allv = allv[allv > 0]
    plot = SvgPlot((times[1], times[-1]), (allv.min(), allv.max()), title="d(t)", xlabel="t", ylabel="distance", logy=True)
    for (N, e), d in curves.items():
        plot.polyline(times[1:], np.maximum(d[1:], allv.min()), label=f"N={N}, eps={_tag(e)}", width=0.8)
    atomic_write(out / "divergence.svg", plot.render())
    summary = {"orders": {str(k): v for k, v in orders.items()}, "d_T": {f"{N},{_tag(e)}": v for (N, e), v in final.items()}}
    atomic_write(out / "compare_flows_summary.json", json_text(summary))
    return 0, summary


# ---------------------------------------------------------------------------
# birkhoff


def run_birkhoff(cfg: ExperimentConfig, out: Path):
    F = cfg.make_field()
    A = build_potential(F, cfg.gauge)
    ch = darboux_chart(F)
    try:
        qmin, _ = field_minimum(F)
        has_min = F.kind != "constant"
    except (FieldError, ValueError, RuntimeError):
        has_min = False
    q_base = qmin if has_min else np.asarray(cfg.q0, float)
    nf = normal_form(F, cfg.N1, cfg.N2, potential=A, basepoint=ch.forward(q_base))
    atomic_write(out / "normal_form.json", json_text(json.loads(nf.to_json())))
    lines = [f"# Normal form for field {F.name}", "", f"truncation (N1, N2) = ({cfg.N1}, {cfg.N2}), basepoint z2 = {nf.basepoint.tolist()}", ""]
    kn = nf.kappa.max_abs()
    lines.append(f"max |kappa coefficient| = {kn:.6g}" + ("  (kappa = 0)" if kn == 0 else ""))
    if nf.eig_coeffs is not None:
        bmin, c0, c1 = nf.eig_coeffs
        lines += ["", f"B_min = {bmin:.12g}", f"c1 = {c1:.12g}", f"c0 = {c0:.12g} (normal-form part only)"]
    lines += ["", "| N | residual exponent | required |", "|---|---|---|"]
    fits = {}
    for N in cfg.orders:
        if N > cfg.N1:
            continue
        radii, res, _ = C.residual_decay(F, nf, N)
        if np.all(res < 1e-13 * max(1.0, F.max_on_box())):
            fits[N] = "exact"
            lines.append(f"| {N} | exact (residual {res.max():.1e}) | {N + 0.7:g} |")
        else:
            fits[N] = C.loglog_slope(radii, res)
            lines.append(f"| {N} | {fits[N]:.4f} | {N + 0.7:g} |")
    lines += ["", "nonresonant residual per degree: " + json.dumps(nf.diagnostics["nonresonant_residual"], sort_keys=True)]
    atomic_write(out / "birkhoff_report.md", "\n".join(lines) + "\n")
    summary = {"eig_coeffs": nf.eig_coeffs, "kappa_max": kn, "residual_exponents": {str(k): v for k, v in fits.items()}}
    atomic_write(out / "birkhoff_summary.json", json_text(summary))
    return 0, summary


# ---------------------------------------------------------------------------
# spectrum


def _spectral_box(F, hbar, cfg):
    if F.kind == "constant":
        L = cfg.half_width * np.sqrt(hbar / float(F.coeffs[0, 0]))
        return ((-L, L), (-L, L))
    return S.well_box(F, hbar, cfg.half_width)


def run_spectrum(cfg: ExperimentConfig, out: Path):
    F = cfg.make_field()
    A = build_potential(F, cfg.gauge)
    if F.kind == "constant":
        bmin, c0, c1 = float(F.coeffs[0, 0]), None, None
    else:
        qmin, bmin = field_minimum(F)
        nf = normal_form(F, cfg.N1, cfg.N2, potential=A, basepoint=darboux_chart(F).forward(qmin))
        if nf.eig_coeffs is not None:
            bmin, c0, c1 = nf.eig_coeffs
        else:
            c0 = c1 = None
    lam1 = []
    results = {}
    rows = []
    for h in cfg.hbars:
        box = _spectral_box(F, h, cfg)
        res = S.solve_with_estimate(F, A, h, box, cfg.n, cfg.k, sigma=0.95 * bmin * h, partner_factor=cfg.partner_factor, return_vectors=True)
        vec = res.eigenvectors[:, 0]
        _ground_csv(out / f"ground_state_hbar{_tag(h)}.csv", res.grid, vec)
        res.eigenvectors = None
        results[_tag(h)] = res.to_dict()
        lam1.append(res.eigenvalues[0])
        for j, (lam, r, e) in enumerate(zip(res.eigenvalues, res.residual_norms, res.discretization_error_estimate), start=1):
            if F.kind == "constant":
                pred = h * bmin  # the k lowest states all sit in the first Landau level
            elif c1 is not None:
                pred = h * bmin + h**2 * (c1 * (2 * j - 1) + c0)
            else:
                pred = float("nan")
            rows.append([h, j, lam, pred, lam - pred, r, e])
    atomic_write(
        out / "spectrum_table.csv",
        csv_text(["hbar", "j", "lambda", "prediction", "difference", "residual", "discretization_error"], rows),
    )
    summary = {"B_min": bmin, "c0": c0, "c1": c1, "results": results}
    if len(cfg.hbars) >= 2:
        hb = np.asarray(cfg.hbars)
        summary["lambda1_exponent"] = C.loglog_slope(hb, np.asarray(lam1) - bmin * hb)
    atomic_write(out / "spectrum.json", json_text(summary))
    return 0, summary


def _ground_csv(path, grid, vec, stride=None):
    n = grid.n
    stride = stride or max(1, n // 128)
    P = (np.abs(vec) ** 2).reshape(n, n)
    P = P / P.sum()
    rows = [[grid.x[i], grid.y[j], P[i, j]] for i in range(0, n, stride) for j in range(0, n, stride)]
    atomic_write(path, csv_text(["x", "y", "density"], rows))


# ---------------------------------------------------------------------------
# counting


def run_counting(cfg: ExperimentConfig, out: Path):
    F = cfg.make_field()
    A = build_potential(F, cfg.gauge)
    level = cfg.threshold if cfg.threshold is not None else C.COUNT_LEVEL
    bmin = field_minimum(F)[1]
    vol = S.phase_volume(F, level)
    rows, gaps = [], []
    for h in cfg.hbars:
        box = C.counting_box(F, level, h)
        op = S.assemble_magnetic_laplacian(F, A, h, box, cfg.n, well_threshold=level)
        k = int(1.25 * vol / (2 * np.pi * h)) + 12
        while True:
            r = S.lowest_eigenpairs(op, k, sigma=0.95 * bmin * h, return_vectors=True)
            if r.eigenvalues[-1] > level * h:
                break
            k = int(1.5 * k)
        N = S.counting_function(r, level * h)
        mass = S.localization_profile(r.eigenvectors[:, 0], F, op.grid, 2.5)
        rows.append([h, N, vol / (2 * np.pi * h), N * 2 * np.pi * h / vol, N * h, mass])
        if cfg.window is not None:
            c, w = cfg.window
            g = S.gap_statistics(r, ((c - w) * h, (c + w) * h))
            gaps.append([h, len(g), float(np.mean(g)) if len(g) else float("nan")])
    atomic_write(
        out / "counting.csv",
        csv_text(["hbar", "count", "weyl_estimate", "ratio", "count_times_hbar", "ground_mass_outside_B_le_2.5"], rows),
    )
    summary = {"level": level, "phase_volume": vol, "rows": rows}
    if gaps:
        atomic_write(out / "gaps.csv", csv_text(["hbar", "gaps", "mean_gap"], gaps))
        good = [(g[0], g[2]) for g in gaps if g[1] > 0]
        if len(good) >= 2:
            summary["gap_exponent"] = C.loglog_slope(*zip(*good))
        summary["gaps"] = gaps
    atomic_write(out / "counting_summary.json", json_text(summary))
    return 0, summary


# ---------------------------------------------------------------------------
# report


def run_report(cfg: ExperimentConfig, out: Path):
    results = []
    timing = {}
    for k in cfg.criteria:
        r = C.ALL[k](seed=cfg.seed) if k in (3, 7) else C.ALL[k]()
        results.append(r)
        timing[str(k)] = {"runtime_s": r.runtime, "budget_s": r.budget}
        print(r.line(), flush=True)
    ok = all(r.passed for r in results)
    # runtimes live in timing.json so that report.json is reproducible
    body = {
        "all_passed": ok,
        "criteria": [
            {k: v for k, v in r.to_dict().items() if k != "runtime_s"} | {"within_budget": r.runtime < r.budget} for r in results
        ],
    }
    atomic_write(out / "report.json", json_text(body))
    atomic_write(out / "timing.json", json_text(timing))
    md = ["# Acceptance report", "", "| # | criterion | result | checks |", "|---|---|---|---|"]
    for r in results:
        checks = "; ".join(f"{c.name} = {c.value:.4g} ({c.bound}) {'ok' if c.passed else 'FAIL'}" for c in r.checks)
        md.append(f"| {r.number} | {r.title} | {'PASS' if r.passed else 'FAIL'} | {checks} |")
    md.append("")
    md.append("all passed" if ok else "some criteria failed")
    atomic_write(out / "report.md", "\n".join(md) + "\n")
    return (0 if ok else 1), body


RUNNERS = {
    "trajectory": run_trajectory,
    "compare-flows": run_compare_flows,
    "birkhoff": run_birkhoff,
    "spectrum": run_spectrum,
    "counting": run_counting,
    "report": run_report,
}


def run(cfg: ExperimentConfig, out=None):
    out = Path(out if out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.json", json_text(cfg.to_dict()))
    t = time.perf_counter()
    code, summary = RUNNERS[cfg.experiment](cfg, out)
    return code, summary, time.perf_counter() - t
