#!/usr/bin/env python3
"""Run the headline curriculum experiment and render the charts.

Trains the curriculum learner plus the zero-shot and vanilla baselines
over ten seeds, writes minecraft_metrics.csv next to this script's
parent directory, and renders smoothed-return and cumulative-violation
SVGs.  Pass extra CLI flags (e.g. --jobs 4 or --seeds 0..2) through.
"""

import os
import sys

from safegrid.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "configs", "minecraft.ini")


if __name__ == "__main__":
    extra = sys.argv[1:]
    rc = main(["run", "--config", CONFIG, *extra])
    if rc == 0:
        rc = main([
            "plot", "--metrics", "minecraft_metrics.csv",
            "--out-returns", "minecraft_returns.svg",
            "--out-violations", "minecraft_violations.svg",
        ])
    sys.exit(rc)
