"""Draw the standard SVGs from the CSVs in a results directory.

Usage: python3 scripts/plot_results.py [results_dir]
"""

import sys
from pathlib import Path

from sardlab.cli import main

KIND_BY_PREFIX = {"scaling_": "scaling", "sweep_": "tradeoff", "coarea_": "coarea"}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    results = Path(argv[0] if argv else "results")
    status = 0
    for csv_path in sorted(results.glob("*.csv")):
        kind = next((k for prefix, k in KIND_BY_PREFIX.items() if csv_path.stem.startswith(prefix)), None)
        if kind is not None:
            status = max(status, main(["plot", str(csv_path), "--kind", kind]))
    return status


if __name__ == "__main__":
    sys.exit(run())
