"""Command-line entry point: ``minprof <command> --config run.yaml``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import EXAMPLE_CONFIG, PipelineConfig, apply_overrides
from .exceptions import ConfigError, DataError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

COMMANDS = {
    "ingest": "validate the outcome and indicator files; write the cleaned panel",
    "impute": "difference variables, PMM imputation, collinearity filter, standardization",
    "fit-growth": "fit the growth model for every configured loading model",
    "score": "PSIS-LOO comparison of the fitted growth models",
    "bma": "model averaging of growth rates on the design matrix",
    "project": "forecast trajectories to the future cycles",
    "run": "ingest, impute, fit-growth, score, bma and project in one go",
    "sensitivity": "KL divergence over the g-prior by model-prior grid",
}

logger = logging.getLogger("minprof")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minprof", description=__doc__)
    parser.add_argument("--example-config", action="store_true",
                        help="print a fully commented example config and exit")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="YAML pipeline configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides paths.out)")
        p.add_argument("--group", choices=("boys", "girls"))
        p.add_argument("--domain", choices=("reading", "mathematics"))
        p.add_argument("--model", choices=("m0", "m1", "m2"),
                       help="loading model used for BMA and projection")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.example_config:
        sys.stdout.write(EXAMPLE_CONFIG)
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    from .pipeline import execute

    try:
        cfg = PipelineConfig.from_yaml(args.config)
        apply_overrides(cfg, seed=args.seed, out=args.out, group=args.group,
                        domain=args.domain, model=args.model)
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            out = execute(cfg, args.command)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
