#!/usr/bin/env python3
"""Prebuild every weight table the bundled experiments need.

Populates .cache/tables/ at the repository root: the 3-node tables for the
exclusion-radius sweep (radii 0.1 .. 0.0125 plus the 0.001 reference) and the
3..7-node tables at radius 0.0125 for the order-refinement study.  Already
cached tables are skipped, so rerunning is cheap.  The 7-node table is the
expensive one (roughly ten minutes at the default 'fast' resolution).
"""

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from nyvie.cli import main  # noqa: E402


def run() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolution", choices=("table", "fast"), default="fast")
    ap.add_argument("--table-dir", default=str(REPO / ".cache" / "tables"))
    args = ap.parse_args()

    jobs = [(3, d) for d in (0.1, 0.05, 0.025, 0.0125, 0.001)]
    jobs += [(m, 0.0125) for m in (4, 5, 6, 7)]
    for m, delta in jobs:
        code = main(["weights", "compute", "--m", str(m), "--delta", repr(delta),
                     "--resolution", args.resolution,
                     "--table-dir", args.table_dir])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
