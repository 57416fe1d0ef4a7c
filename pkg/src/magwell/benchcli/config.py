"""Flat key = value experiment configs.

Grammar: one ``key = value`` per line, ``#`` or ``;`` starts a comment line,
lists are comma separated, keys are case-insensitive. Unknown keys are errors.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field as dc_field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from ..fieldlab import FieldError, make_field

EXPERIMENTS = ("trajectory", "compare-flows", "birkhoff", "spectrum", "counting", "report")


class ConfigError(ValueError):
    pass


class LCG64:
    """x <- 6364136223846793005 x + 1442695040888963407 (mod 2^64); uniform = (x >> 11) / 2^53."""

    A = 6364136223846793005
    C = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self.MASK

    def next_u64(self) -> int:
        self.state = (self.A * self.state + self.C) & self.MASK
        return self.state

    def uniform(self, size=None, low=0.0, high=1.0):
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n)
        for i in range(n):
            out[i] = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        out = low + (high - low) * out
        return out[0] if size is None else out.reshape(size)

    def normal(self, size):
        # Box-Muller on pairs
        n = int(np.prod(size))
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        return z.reshape(size)


@dataclass
class ExperimentConfig:
    experiment: str
    field_spec: object = "fig2"
    gauge: str = "landau_x"
    energies: list = dc_field(default_factory=lambda: [0.05, 0.025, 0.0125])
    eps: list = dc_field(default_factory=lambda: [0.05, 0.025, 0.0125])
    orders: list = dc_field(default_factory=lambda: [2, 3, 4])
    T: float = 500.0
    dt: float = 1e-3
    method: str = "midpoint4"
    stride: int = 10
    q0: list = dc_field(default_factory=lambda: [0.5, 0.0])
    N1: int = 8
    N2: int = 6
    hbars: list = dc_field(default_factory=lambda: [0.01])
    n: int = 512
    k: int = 5
    half_width: float = 9.0
    partner_factor: float = 1.5
    threshold: Optional[float] = None
    window: Optional[list] = None
    points: int = 50
    criteria: list = dc_field(default_factory=lambda: list(range(1, 10)))
    output_dir: str = "out"
    seed: int = 20240601

    def to_dict(self):
        d = asdict(self)
        d["field_spec"] = _spec_repr(self.field_spec)
        return d

    def rng(self) -> LCG64:
        return LCG64(self.seed)

    def make_field(self):
        try:
            return make_field(self.field_spec)
        except (FieldError, KeyError, SyntaxError) as exc:
            raise ConfigError(f"bad field: {exc}") from exc


def _spec_repr(spec):
    if isinstance(spec, dict):
        return {k: (str(v) if callable(v) else v) for k, v in spec.items() if k != "fn"}
    return spec


_FLOAT_LISTS = {"energies", "eps", "q0", "hbars", "window"}
_INT_LISTS = {"orders", "criteria"}
_FLOATS = {"t": "T", "dt": "dt", "half_width": "half_width", "partner_factor": "partner_factor", "threshold": "threshold"}
_INTS = {"stride", "n1", "n2", "n", "k", "points", "seed"}
_STRS = {"gauge", "method", "output_dir", "experiment"}
_EXTRA = {"field", "field_box", "field_confinement"}


def parse_field(text: str, box=None, confinement=None):
    """``fig2`` | ``constant 2.0`` | ``polynomial 0,0:2; 2,0:1; 0,2:1`` | ``radial 2 + r**2``."""
    text = text.strip()
    head, _, rest = text.partition(" ")
    head = head.lower()
    rest = rest.strip()
    if head in ("fig2", "quadratic", "ridge") and not rest:
        spec = head
    elif head == "constant":
        spec = {"kind": "constant", "name": "constant", "B0": float(rest) if rest else 1.0}
    elif head == "polynomial":
        terms = {}
        for item in rest.split(";"):
            item = item.strip()
            if not item:
                continue
            exps, _, c = item.partition(":")
            i, j = (int(x) for x in exps.split(","))
            terms[(i, j)] = float(c)
        if not terms:
            raise ConfigError("polynomial field needs terms i,j:coef")
        spec = {"kind": "polynomial", "name": "polynomial", "coefficients": terms}
    elif head == "radial":
        if not rest:
            raise ConfigError("radial field needs a profile expression in r")
        spec = {"kind": "radial", "name": "radial", "profile": rest}
    else:
        raise ConfigError(f"unknown field {text!r}")
    if box is not None or confinement is not None:
        if isinstance(spec, str):
            from ..fieldlab import builtin_descriptor

            spec = builtin_descriptor(spec)
        if box is not None:
            spec["domain_box"] = ((box[0], box[1]), (box[2], box[3]))
        if confinement is not None:
            spec["confinement"] = tuple(confinement)
    return spec


def _floats(v, key):
    try:
        out = [float(x) for x in v.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got {v!r}") from exc
    return out


def parse_config(text: str, experiment: Optional[str] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if cp.sections() != ["config"]:
        raise ConfigError("section headers are not allowed")
    items = dict(cp.items("config"))
    exp = items.pop("experiment", None)
    if experiment is not None:
        if exp is not None and exp != experiment:
            raise ConfigError(f"config is for {exp!r}, command asked for {experiment!r}")
        exp = experiment
    if exp is None:
        raise ConfigError("no experiment given")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}")
    cfg = ExperimentConfig(exp)
    _apply_defaults(cfg)
    box = conf = None
    for key, val in items.items():
        if key in _FLOAT_LISTS:
            setattr(cfg, key, _floats(val, key))
        elif key in _INT_LISTS:
            try:
                setattr(cfg, key, [int(x) for x in val.split(",") if x.strip()])
            except ValueError as exc:
                raise ConfigError(f"{key}: expected integers") from exc
        elif key in _FLOATS:
            try:
                setattr(cfg, _FLOATS[key], float(val))
            except ValueError as exc:
                raise ConfigError(f"{key}: expected a number") from exc
        elif key in _INTS:
            try:
                setattr(cfg, {"n1": "N1", "n2": "N2"}.get(key, key), int(val))
            except ValueError as exc:
                raise ConfigError(f"{key}: expected an integer") from exc
        elif key in _STRS:
            setattr(cfg, key, val.strip())
        elif key == "field":
            cfg.field_spec = val
        elif key == "field_box":
            box = _floats(val, key)
            if len(box) != 4:
                raise ConfigError("field_box needs x0, x1, y0, y1")
        elif key == "field_confinement":
            conf = _floats(val, key)
            if len(conf) != 2:
                raise ConfigError("field_confinement needs C1, R")
        else:
            raise ConfigError(f"unknown key {key!r}")
    if isinstance(cfg.field_spec, str):
        cfg.field_spec = parse_field(cfg.field_spec, box, conf)
    validate(cfg)
    return cfg


def _apply_defaults(cfg: ExperimentConfig):
    # per-experiment defaults follow the acceptance settings
    if cfg.experiment == "compare-flows":
        cfg.T, cfg.dt, cfg.method = 50.0, 0.01, "dop853"
    elif cfg.experiment == "spectrum":
        cfg.hbars, cfg.n, cfg.k = [0.01], 512, 5
    elif cfg.experiment == "counting":
        cfg.hbars, cfg.n, cfg.threshold = [0.02, 0.01, 0.005], 384, 2.6


def validate(cfg: ExperimentConfig):
    if cfg.T <= 0 or cfg.dt <= 0:
        raise ConfigError("T and dt must be positive")
    if cfg.n <= 0 or cfg.k <= 0 or cfg.stride <= 0:
        raise ConfigError("n, k and stride must be positive")
    for name in ("energies", "eps", "orders", "hbars"):
        if not getattr(cfg, name):
            raise ConfigError(f"{name} must be non-empty")
    if any(h <= 0 for h in cfg.hbars):
        raise ConfigError("hbar values must be positive")
    if any(e <= 0 for e in cfg.energies) or any(e <= 0 for e in cfg.eps):
        raise ConfigError("energies must be positive")
    if any(N < 2 for N in cfg.orders):
        raise ConfigError("orders must be at least 2")
    if len(cfg.q0) != 2:
        raise ConfigError("q0 needs two numbers")
    if cfg.window is not None and len(cfg.window) != 2:
        raise ConfigError("window needs center, half-width (in units of hbar)")
    if cfg.gauge not in ("landau_x", "symmetric"):
        raise ConfigError("gauge must be landau_x or symmetric")
    if cfg.method not in ("implicit_midpoint", "midpoint4", "boris", "dop853"):
        raise ConfigError(f"unknown method {cfg.method!r}")
    if any(c < 1 or c > 9 for c in cfg.criteria):
        raise ConfigError("criteria are numbered 1..9")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")


def load_config(path, experiment: Optional[str] = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text, experiment)
