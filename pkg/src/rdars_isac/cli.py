"""Command-line entry point for running experiment sweeps."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .harness import EXPERIMENT_KINDS, emit_outputs, make_spec, run_experiment
from .scenario import default_config, desk_config, load_config
from .schemes import scheme_names

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdars-isac",
                                     description="RDARS-aided sensing/communication experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment sweep")
    run.add_argument("--config", help="config file (flat key=value schema)")
    run.add_argument("--experiment", required=True, choices=EXPERIMENT_KINDS)
    run.add_argument("--schemes", help="comma-separated scheme list "
                                       f"(known: {', '.join(scheme_names())})")
    run.add_argument("--trials", type=int, default=20)
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--out", required=True)
    run.add_argument("--preset", choices=("desk", "paper"), default="desk")
    run.add_argument("--grid", help="comma-separated sweep values overriding the default")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--max-iters", type=int, help="override stopping.max_iters")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            config = load_config(args.config)
        else:
            config = desk_config() if args.preset == "desk" else default_config()
        if args.max_iters:
            from dataclasses import replace
            config = replace(config, stopping=replace(config.stopping, max_iters=args.max_iters))
        schemes = args.schemes.split(",") if args.schemes else None
        grid = [float(v) for v in args.grid.split(",")] if args.grid else None
        spec = make_spec(args.experiment, config=config, schemes=schemes,
                         trials=args.trials, seed=args.seed, grid=grid, preset=args.preset)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        records = run_experiment(spec, jobs=args.jobs)
        written = emit_outputs(records, args.out, kind=args.experiment)
    except Exception as exc:  # solver-level failures that escaped per-row capture
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
