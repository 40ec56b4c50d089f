#!/usr/bin/env python3
"""Run the singular-quadrature weight-accuracy experiment.

Compares the tabulated interpolated weights for the 3-node reference cube at
four exclusion radii against brute-force integration at radius 0.001, entry
by entry for the center/corner/edge/face node classes, and checks the
second-order decay of the truncation error.  Outputs land in
out/weight_accuracy/ (report.json, report.txt, resolved_config.json).
"""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from nyvie.cli import main  # noqa: E402

if __name__ == "__main__":
    raise SystemExit(main(
        ["--config", str(REPO / "configs" / "weight_accuracy.toml"),
         "--out", str(REPO / "out" / "weight_accuracy"),
         "experiment", "weight-accuracy"] + sys.argv[1:]))
