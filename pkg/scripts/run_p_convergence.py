#!/usr/bin/env python3
"""Run the order-refinement convergence experiment.

Solves the single-element cube problem (edge pi, contrast 4) at 3..6 nodes
per axis against a 7-node reference with the exclusion radius fixed at
0.0125, measures component-wise L2 differences of the interpolants, and fits
log10(error) against the polynomial order.  Outputs land in
out/p_convergence/ including p_convergence.csv with the plot data.
"""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from nyvie.cli import main  # noqa: E402

if __name__ == "__main__":
    raise SystemExit(main(
        ["--config", str(REPO / "configs" / "p_convergence.toml"),
         "--out", str(REPO / "out" / "p_convergence"),
         "experiment", "p-convergence"] + sys.argv[1:]))
