"""Command line: run, list-maps, validate, plot.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..funczoo import BUILTINS, GateError, validate
from .config import ConfigError, load_config
from .experiments import _map, run_experiment, validate_config
from .plots import KINDS, emit_plot
from .records import read_csv, verify_predictions, write_csv

OK, FAILED, USAGE = 0, 1, 2


def _cmd_run(args) -> int:
    status = OK
    for path in args.configs:
        config = load_config(path)
        result = run_experiment(config, jobs=args.jobs)
        out = Path(args.output or config.output) / f"{config.name}.csv"
        write_csv(result.records, out)
        print(f"{config.name}: {len(result.records)} rows -> {out}")
        for note in result.notes:
            print(f"  note: {note}")
        for fail in result.failures:
            print(f"  FAIL: {fail}")
        if result.failures:
            status = FAILED
    return status


def _cmd_list(args) -> int:
    for name in sorted(BUILTINS):
        print(name)
    print("(or any DSL map text such as '(x0^2 - x1^2, 2*x0*x1)')")
    return OK


def _cmd_validate(args) -> int:
    status = OK
    for path in args.configs:
        config = load_config(path)
        units = validate_config(config)
        if config.map:
            try:
                validate(_map(config))
            except GateError as exc:
                print(f"{config.name}: FAIL: {exc}")
                status = FAILED
                continue
        print(f"{config.name}: ok ({len(units)} work units)")
    return status


def _cmd_plot(args) -> int:
    try:
        records = read_csv(args.csv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    bad = verify_predictions(records)
    for line in bad:
        print(f"FAIL: {line}")
    out = Path(args.out) if args.out else Path(args.csv).with_suffix(f".{args.kind}.svg")
    try:
        emit_plot(records, args.kind, out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED
    print(f"wrote {out}")
    return FAILED if bad else OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sardlab", description="Numerical experiments on Morse-Sard type relations.")
    sub = parser.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run experiment configs and write CSVs")
    run.add_argument("configs", nargs="+")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--output", help="override the configs' output directory")
    run.set_defaults(func=_cmd_run)
    lst = sub.add_parser("list-maps", help="list built-in maps")
    lst.set_defaults(func=_cmd_list)
    val = sub.add_parser("validate", help="check configs and run the map gates")
    val.add_argument("configs", nargs="+")
    val.set_defaults(func=_cmd_validate)
    plot = sub.add_parser("plot", help="SVG from an experiment CSV")
    plot.add_argument("csv")
    plot.add_argument("--kind", choices=KINDS, required=True)
    plot.add_argument("--out")
    plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
