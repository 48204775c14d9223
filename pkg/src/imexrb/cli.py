"""Command-line driver for single runs, presets, and the eps-bar helper."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .harness import (
    ConfigError,
    ExperimentError,
    ExperimentSpec,
    epsilon_bar,
    preset,
    preset_names,
    run_experiment,
)


def _add_common(parser):
    parser.add_argument("--threads", type=int, default=1, metavar="K",
                        help="run sweep points on K worker threads")
    parser.add_argument("--csv", default=None, metavar="PATH",
                        help="override the output CSV path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="imexrb",
        description="Benchmark harness for reduced-basis implicit-explicit "
                    "time integration")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config (JSON)")
    p_run.add_argument("config", help="path to the experiment JSON file")
    _add_common(p_run)

    p_preset = sub.add_parser("preset", help="run a named experiment preset")
    p_preset.add_argument("name", nargs="?",
                          help="preset name (omit with --list)")
    p_preset.add_argument("--out", default=".", metavar="DIR",
                          help="output directory for the CSV (default: .)")
    p_preset.add_argument("--list", action="store_true",
                          help="list available presets and exit")
    _add_common(p_preset)

    p_eps = sub.add_parser("epsbar",
                           help="print the eps-bar estimate for a linear "
                                "problem")
    p_eps.add_argument("problem", help="problem id (advdiff2d | advdiff3d)")
    p_eps.add_argument("n_per_dim", type=int, help="grid nodes per dimension")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = ExperimentSpec.from_json(args.config)
            rows = run_experiment(spec, threads=args.threads,
                                  csv_path=args.csv)
            print(f"wrote {len(rows)} rows to "
                  f"{args.csv or spec.csv_path or '(no csv path set)'}")
        elif args.command == "preset":
            if args.list:
                for name in preset_names():
                    print(name)
                return 0
            if not args.name:
                print("error: preset name required (or --list)",
                      file=sys.stderr)
                return 2
            spec = preset(args.name)
            csv_path = args.csv or os.path.join(args.out, f"{args.name}.csv")
            rows = run_experiment(spec, threads=args.threads,
                                  csv_path=csv_path)
            print(f"wrote {len(rows)} rows to {csv_path}")
        elif args.command == "epsbar":
            value = epsilon_bar(args.problem, args.n_per_dim)
            print(f"{value:.6e}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
