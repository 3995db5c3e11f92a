"""Command-line entry points.

    score-forge run <config.json> [--out DIR] [--threads N]
    score-forge certify-kernel [--max-order L]
    score-forge version

Exit codes: 0 success, 1 config error, 2 acceptance failure, 3 runtime
error. SCORE_FORGE_THREADS overrides the default worker count when
--threads is not given.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .harness import (
    CERTIFY_MOMENT_TOL,
    CERTIFY_UNIT_TOL,
    ConfigError,
    load_config,
    run_experiment,
)
from .kernel import build_kernel, moment_report

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ACCEPTANCE = 2
EXIT_RUNTIME = 3


def _thread_count(arg_value):
    if arg_value is not None:
        return arg_value
    env = os.environ.get("SCORE_FORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SCORE_FORGE_THREADS: not an integer: {env!r}")
    return 1


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    threads = _thread_count(args.threads)
    result = run_experiment(cfg, out_dir=args.out, threads=threads)
    for name, fitted in result.slopes.items():
        print(f"{name}: slope={fitted.slope:.4f} intercept={fitted.intercept:.4f} r2={fitted.r2:.4f}")
    if result.failures:
        for f in result.failures:
            print(f"FAIL {f}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    out = args.out if args.out is not None else cfg.out_dir
    print(f"wrote results.csv, slopes.csv, plot.svg under {out}")
    return EXIT_OK


def _cmd_certify(args) -> int:
    failed = False
    for order in range(1, args.max_order + 1):
        unit_defect, worst = moment_report(build_kernel(order))
        ok = unit_defect < CERTIFY_UNIT_TOL and worst < CERTIFY_MOMENT_TOL
        failed |= not ok
        print(f"order {order:3d}: |int K - 1| = {unit_defect:.3e}  "
              f"max moment = {worst:.3e}  {'ok' if ok else 'FAIL'}")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="score-forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--out", default=None, help="output directory (overrides config out_dir)")
    run.add_argument("--threads", type=int, default=None, help="worker threads for grid cells")
    run.set_defaults(func=_cmd_run)

    cert = sub.add_parser("certify-kernel", help="check kernel moment conditions")
    cert.add_argument("--max-order", type=int, default=16, help="certify orders 1..L")
    cert.set_defaults(func=_cmd_certify)

    ver = sub.add_parser("version", help="print the package version")
    ver.set_defaults(func=lambda args: (print(__version__), EXIT_OK)[1])
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
