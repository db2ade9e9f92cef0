"""Run every shipped config (or the given ones) and write CSVs to results/.

Usage: python3 scripts/run_experiments.py [--jobs N] [config ...]
"""

import argparse
import sys
from pathlib import Path

from sardlab.cli import main

CONFIGS = Path(__file__).resolve().parent / "configs"


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("configs", nargs="*", help="config files (default: scripts/configs/*.cfg)")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--output", default="results")
    args = parser.parse_args(argv)
    configs = args.configs or [str(p) for p in sorted(CONFIGS.glob("*.cfg"))]
    return main(["run", *configs, "--jobs", str(args.jobs), "--output", args.output])


if __name__ == "__main__":
    sys.exit(run())
