"""Command line entry point.

    repgeo <experiment> --config <path> [--out <dir>] [--seed N] [--format csv|json] [--plot]

Without ``--out`` (or ``output.dir`` in the config) the table goes to stdout.
Exit codes: 0 success, 2 config error, 3 numerics error, 4 IO error.
"""

import argparse
import logging
import os
import sys

from ..errors import ConfigError, ReparamError
from . import config as config_mod
from . import experiments, report as report_mod

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_IO = 0, 2, 3, 4


def build_parser():
    parser = argparse.ArgumentParser(prog="repgeo", description="Reparametrization experiments.")
    parser.add_argument("experiment", choices=config_mod.EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (default: config output.dir, else stdout)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--format", choices=("csv", "json"), help="table format (default csv)")
    parser.add_argument("--plot", action="store_true", help="also write an SVG figure")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load(args.config, args.experiment, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    out_cfg = cfg["output"]
    fmt = args.format or out_cfg["format"]
    out_dir = args.out or out_cfg.get("dir")
    plot = args.plot or out_cfg["plot"]

    try:
        rep = experiments.run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ReparamError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerics error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICS

    stem = args.experiment.replace("-", "_")
    try:
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            path = report_mod.write(rep, os.path.join(out_dir, f"{stem}.{fmt}"), fmt)
            print(path, file=sys.stderr)
        else:
            sys.stdout.write(report_mod.render(rep, fmt))
        if plot:
            from .plotting import plot_report

            for path in plot_report(rep, os.path.join(out_dir or ".", f"{stem}.svg")):
                print(path, file=sys.stderr)
    except OSError as exc:
        print(f"IO error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
