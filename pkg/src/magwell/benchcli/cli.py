"""magwell <experiment> --config <path> [--out <dir>] [--seed <n>]

Exit codes: 0 pass, 1 acceptance failure, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ..fieldlab import ChartError, FieldError
from ..specwell import AliasingError, BoxTooSmall, EigenError
from ..starbirk.birkhoff import NormalFormError
from ..starbirk.transform import TransformError
from ..symflow import DomainError, IntegrationError
from .config import EXPERIMENTS, ConfigError, load_config, parse_config

NUMERICAL = (
    IntegrationError,
    DomainError,
    EigenError,
    NormalFormError,
    TransformError,
    ChartError,
    BoxTooSmall,
    AliasingError,
    FloatingPointError,
    np.linalg.LinAlgError,
)

log = logging.getLogger("magwell")


def build_parser():
    p = argparse.ArgumentParser(prog="magwell", description="magnetic-well experiments and acceptance report")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key = value config file (defaults apply when omitted)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="seed for random test points (overrides seed)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .experiments import run

    try:
        cfg = load_config(args.config, args.experiment) if args.config else parse_config("", args.experiment)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            cfg.seed = args.seed
        if args.out:
            cfg.output_dir = args.out
        field_ok = cfg.make_field  # field errors are config errors
        field_ok()
    except (ConfigError, FieldError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code, summary, elapsed = run(cfg)
    except NUMERICAL as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # parameter checks inside the solvers (dt rule, grid size, k range)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.1fs", cfg.experiment, elapsed)
    print(f"{cfg.experiment}: wrote results to {cfg.output_dir} ({elapsed:.1f}s)")
    return code


if __name__ == "__main__":
    sys.exit(main())
