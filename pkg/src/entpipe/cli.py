"""Command line front end.

Exit codes: 0 success, 2 configuration problem, 3 numerical non-convergence,
4 stage failure.  Flags override environment overrides override the config
file; see ``config.apply_env`` for the recognized EP_* variables.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import apply_env, apply_flags, default_config, load_config
from .errors import ConfigError, ConvergenceError, EntpipeError
from .runner import STAGES, write_stage_result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entpipe",
        description="Quantum-dot entanglement pipeline simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "ghz": "Plan and execute a register entangling schedule.",
        "protect": "Run paired protected/unprotected storage trajectories.",
        "swap": "Time-resolve the photon frequency conversion probability.",
        "sweep": "Map long-time conversion probability over a parameter box.",
        "pipeline": "Run the full register-to-polarization chain.",
    }
    for name, desc in descriptions.items():
        cmd = sub.add_parser(name, help=desc)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--out", help="output directory (default from config)")
        cmd.add_argument("--seed", type=int, help="base seed override")
        cmd.add_argument("--workers", type=int, help="process pool size")
        cmd.add_argument("--format", choices=("csv", "json"), help="table format")
    return parser


def _load(args) -> "PipelineConfig":
    cfg = load_config(args.config) if args.config else default_config()
    cfg = apply_env(cfg, os.environ)
    return apply_flags(
        cfg, seed=args.seed, out=args.out, workers=args.workers, fmt=args.format
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2

    try:
        result = STAGES[args.command](cfg)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"[{args.command}] did not converge: {exc}", file=sys.stderr)
        return 3
    except EntpipeError as exc:
        print(f"[{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4

    paths = write_stage_result(result, Path(cfg.run.out_dir), cfg.run.format)
    for path in paths:
        print(path)
    if not result.converged:
        print(f"[{args.command}] unconverged rows flagged in output", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
