import json
from pathlib import Path

import numpy as np
import pytest

from magwell.benchcli import criteria as C
from magwell.benchcli.cli import main
from magwell.benchcli.config import ConfigError, LCG64, load_config, parse_config, parse_field
from magwell.benchcli.experiments import atomic_write, csv_text, json_text
from magwell.benchcli.svg import SvgPlot


# --- LCG ------------------------------------------------------------------------


def test_lcg_first_values():
    g = LCG64(0)
    assert g.next_u64() == 1442695040888963407
    assert g.next_u64() == (6364136223846793005 * 1442695040888963407 + 1442695040888963407) % 2**64


def test_lcg_uniform():
    g = LCG64(20240601)
    u = g.uniform(10000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01
    a = LCG64(7).uniform((3, 2), -1, 1)
    b = LCG64(7).uniform((3, 2), -1, 1)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (3, 2)
    x = LCG64(1)
    x.next_u64()
    assert LCG64(1).uniform() == (x.state >> 11) / 2**53


def test_lcg_normal():
    z = LCG64(3).normal(20001)
    assert z.shape == (20001,)
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


# --- config ----------------------------------------------------------------------


def test_defaults():
    cfg = parse_config("", "trajectory")
    assert cfg.energies == [0.05, 0.025, 0.0125] and cfg.T == 500.0 and cfg.dt == 1e-3
    assert cfg.field_spec == "fig2"
    assert parse_config("", "counting").threshold == 2.6
    assert parse_config("", "compare-flows").method == "dop853"


def test_parse_values():
    text = """
    # comment
    experiment = spectrum
    field = constant 2.0
    hbars = 0.02, 0.01
    n = 128
    k = 3   # inline
    N1 = 6
    seed = 5
    """
    cfg = parse_config(text)
    assert cfg.experiment == "spectrum"
    assert cfg.field_spec["B0"] == 2.0
    assert cfg.hbars == [0.02, 0.01]
    assert (cfg.n, cfg.k, cfg.N1, cfg.seed) == (128, 3, 6, 5)


def test_parse_field_forms():
    assert parse_field("ridge") == "ridge"
    p = parse_field("polynomial 0,0:2; 2,0:1; 0,2:1")
    assert p["coefficients"] == {(0, 0): 2.0, (2, 0): 1.0, (0, 2): 1.0}
    r = parse_field("radial 2 + r**2", box=[-2, 2, -2, 2])
    assert r["domain_box"] == ((-2, 2), (-2, 2))
    with pytest.raises(ConfigError):
        parse_field("hexagon")
    with pytest.raises(ConfigError):
        parse_field("polynomial")


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1",
        "dt = -1",
        "T = 0",
        "energies =",
        "hbars = 0.01, -0.02",
        "n = twelve",
        "gauge = coulomb",
        "method = euler",
        "criteria = 10",
        "orders = 1",
        "q0 = 1",
        "field_box = 1, 2",
        "experiment = spectrum",
        "seed = -3",
        "[section]\nx = 1",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text, "trajectory")


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg", "trajectory")


# --- output helpers ----------------------------------------------------------------


def test_csv_17_digits():
    t = csv_text(["a", "b", "c"], [[0.1, 3, True]])
    assert t == "a,b,c\n0.10000000000000001,3,true\n"
    assert float(t.splitlines()[1].split(",")[0]) == 0.1


def test_json_sorted_and_stable():
    t = json_text({"b": np.float64(1.5), "a": [np.int64(2), np.array([1.0])], "c": float("nan")})
    assert t.index('"a"') < t.index('"b"')
    assert json.loads(t) == {"a": [2, [1.0]], "b": 1.5, "c": "nan"}


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "x.txt"
    atomic_write(p, "hello\n")
    atomic_write(p, "again\n")
    assert p.read_text() == "again\n"
    assert [f.name for f in p.parent.iterdir()] == ["x.txt"]


def test_svg_render():
    plot = SvgPlot((0, 1), (0, 1), title="t")
    plot.polyline([0, 0.5, 1], [0, 1, 0], label="line")
    s = plot.render()
    assert s.startswith("<svg") or s.startswith("<?xml")
    assert "polyline" in s and s.rstrip().endswith("</svg>")


# --- criteria helpers ----------------------------------------------------------------


def test_loglog_slope():
    x = np.array([0.05, 0.025, 0.0125])
    assert C.loglog_slope(x, 3 * x**2) == pytest.approx(2.0, abs=1e-12)


def test_criterion_result_line():
    r = C.CriterionResult(1, "demo", [C._le("x", 0.5, 1.0), C._ge("y", 2.0, 1.0)], 1.0, 10.0, {})
    assert r.passed
    assert r.line().startswith("[PASS] criterion 1")
    r2 = C.CriterionResult(2, "demo", [C._le("x", 2.0, 1.0)], 1.0, 10.0, {})
    assert not r2.passed and r2.line().startswith("[FAIL]")
    slow = C.CriterionResult(3, "demo", [C._le("x", 0.5, 1.0)], 11.0, 10.0, {})
    assert not slow.passed


# --- CLI -------------------------------------------------------------------------------


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_config_error(tmp_path, capsys):
    assert main(["trajectory", "--config", write(tmp_path, "bogus = 1\n"), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["trajectory", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["trajectory", "--config", write(tmp_path, "field = polynomial 1,0:1\n")]) == 2


def test_cli_numerical_failure(tmp_path, capsys):
    cfg = "field = constant 1\nfield_box = -0.2, 0.2, -0.2, 0.2\nenergies = 0.25\nT = 5\nq0 = 0, 0\n"
    assert main(["trajectory", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_cli_dt_rule_is_numerical(tmp_path):
    cfg = "energies = 0.05\nT = 1\ndt = 0.1\n"
    assert main(["trajectory", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_trajectory_constant_circle(tmp_path):
    cfg = "field = constant 1\nenergies = 0.25, 0.0625\nT = 20\nq0 = 0, 0\n"
    out = tmp_path / "o"
    assert main(["trajectory", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    s = json.loads((out / "trajectory_summary.json").read_text())
    assert max(s["deviation"]) < 1e-10
    for f in ("trajectory_E0.25.csv", "trajectory_E0.0625.csv", "deviation_vs_E.csv", "trajectory.svg", "config.json"):
        assert (out / f).exists()
    header = (out / "trajectory_E0.25.csv").read_text().splitlines()[0]
    assert header == "t,q1,q2,p1,p2,H,c1,c2,I,B_at_c"


def test_byte_identical(tmp_path):
    cfg = write(tmp_path, "energies = 0.05, 0.025\nT = 5\n")
    out = tmp_path / "a"
    snaps = []
    for _ in range(2):
        assert main(["trajectory", "--config", cfg, "--out", str(out), "--seed", "11"]) == 0
        snaps.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert snaps[0].keys() == snaps[1].keys()
    for f in snaps[0]:
        assert snaps[0][f] == snaps[1][f], f


def test_birkhoff_constant(tmp_path):
    cfg = "field = constant 1.5\nN1 = 6\nN2 = 3\norders = 2, 3, 4\n"
    out = tmp_path / "o"
    assert main(["birkhoff", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    rep = (out / "birkhoff_report.md").read_text()
    assert "kappa = 0" in rep
    nf = json.loads((out / "normal_form.json").read_text())
    assert isinstance(nf, dict)


def test_birkhoff_fig2(tmp_path):
    cfg = "N1 = 6\nN2 = 4\norders = 2, 3, 4\n"
    out = tmp_path / "o"
    assert main(["birkhoff", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    s = json.loads((out / "birkhoff_summary.json").read_text())
    assert s["eig_coeffs"][2] == pytest.approx(0.5, abs=1e-10)
    for N, v in s["residual_exponents"].items():
        assert v >= int(N) + 0.7
    assert "c1 = 0.5" in (out / "birkhoff_report.md").read_text()


def test_spectrum_constant(tmp_path):
    cfg = "field = constant 1\nhbars = 0.05\nn = 96\nk = 3\npartner_factor = 0.75\n"
    out = tmp_path / "o"
    assert main(["spectrum", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    lines = (out / "spectrum_table.csv").read_text().splitlines()
    assert lines[0] == "hbar,j,lambda,prediction,difference,residual,discretization_error"
    lam = np.array([float(l.split(",")[2]) for l in lines[1:]])
    np.testing.assert_allclose(lam, 0.05, rtol=0.01)


def test_compare_flows_small(tmp_path):
    cfg = "T = 2\ndt = 0.01\neps = 0.05, 0.025\norders = 2, 3\nN1 = 6\nN2 = 4\nstride = 10\n"
    out = tmp_path / "o"
    assert main(["compare-flows", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    rows = (out / "orders.csv").read_text().splitlines()
    assert rows[0].startswith("N,") and len(rows) == 3
    assert (out / "divergence.svg").exists()


def test_report_subset(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["report", "--config", write(tmp_path, "criteria = 7\n"), "--out", str(out)]) == 0
    assert "[PASS] criterion 7" in capsys.readouterr().out
    body = json.loads((out / "report.json").read_text())
    assert body["all_passed"] is True
    assert "runtime_s" not in json.dumps(body)
    assert (out / "timing.json").exists() and (out / "report.md").exists()


@pytest.mark.slow
def test_report_failure_exit(tmp_path):
    # criterion 2 fails on this build (see the decisions ledger): exit code 1
    assert main(["report", "--config", write(tmp_path, "criteria = 2\n"), "--out", str(tmp_path / "o")]) == 1
