"""``fedosov`` command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys
import time

from .coefficients import CoefficientError
from .geodesic import GeodesicError
from .liepair import PresentationError, TorsionError
from .runner import COMMANDS, InputError, RunConfig, run

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedosov",
        description="Exact Fedosov / PBW / intertwiner computations for Lie pairs, with self-checking reports.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="presentation JSON file, or the name of a shipped presentation")
    parser.add_argument("--order", type=int, help="truncation order N (default: the presentation's own)")
    parser.add_argument("--report", help="also write the JSON report to this path")
    parser.add_argument("--splitting", type=int, choices=(1, 2), default=1,
                        help="which splitting's homotopy drives the intertwiner solve")
    parser.add_argument("--json", action="store_true", help="print the JSON report instead of a summary")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    geo = parser.add_argument_group("geodesic")
    geo.add_argument("--connection1", help="Christoffel data: a polynomial (n = 1), inline JSON or a JSON file")
    geo.add_argument("--connection2")
    geo.add_argument("--point", help="base point, e.g. '1/2,-1/3'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    cfg = RunConfig(command=args.command, config=args.config, order=args.order, splitting=args.splitting,
                    report=args.report, json=args.json, verbosity=args.verbose,
                    connection1=args.connection1, connection2=args.connection2, point=args.point)
    start = time.perf_counter()
    try:
        report = run(cfg)
    except (InputError, PresentationError, CoefficientError, GeodesicError, TorsionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = report.to_json()
    if cfg.report:
        with open(cfg.report, "w") as fh:
            fh.write(text)
    sys.stdout.write(text if cfg.json else report.summary() + "\n")
    # wall-clock time stays out of the report so that reports are reproducible byte for byte
    print(f"duration: {time.perf_counter() - start:.3f}s", file=sys.stderr)
    if not report.ok:
        first = next(c for c in report.checks if c["status"] == "fail")
        print(f"first failing check: {first['name']} witness={first.get('witness')}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
