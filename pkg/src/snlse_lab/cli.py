"""Command line entry point: ``snlse-lab <experiment> [options]``."""

from __future__ import annotations

import argparse
import sys

from .harness import EXPERIMENTS, ConfigError, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snlse-lab",
        description=(
            "Spectral benchmark harness for the stochastic cubic Schroedinger "
            "equation with additive Q-Wiener noise on the torus."
        ),
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="experiment to run")
    parser.add_argument("--config", metavar="FILE", help="TOML config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        help="override a config key (dotted paths, e.g. noise.epsilon=0.2); repeatable",
    )
    parser.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    parser.add_argument("--workers", type=int, help="worker processes for path-level parallelism")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides out_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.experiment,
            config_path=args.config,
            set_overrides=args.overrides,
            seed=args.seed,
            workers=args.workers,
            out_dir=args.out,
        )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
