#!/usr/bin/env python3
"""Run the penalty-magnitude sweep on the small deterministic world.

Writes one metrics CSV per penalty value into sweep_out/ and prints the
median cumulative violations and the exactly-evaluated greedy return
for each penalty.
"""

import os
import sys

import numpy as np

from safegrid.cli import main
from safegrid.metrics import read_metrics_csv

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "configs", "sweep.ini")
PENALTIES = (-1.0, -10.0, -100.0)


if __name__ == "__main__":
    extra = sys.argv[1:]
    rc = main([
        "sweep", "--config", CONFIG,
        "--penalties", ",".join(str(p) for p in PENALTIES),
        "--out-dir", "sweep_out", *extra,
    ])
    if rc != 0:
        sys.exit(rc)
    for p in PENALTIES:
        runs = read_metrics_csv(os.path.join("sweep_out", f"sweep_penalty_{p!r}.csv"))
        totals = [int(r.violations.sum()) for r in runs]
        print(f"penalty {p}: median cumulative violations {np.median(totals)}")
    sys.exit(0)
