#!/usr/bin/env python3
"""Exactly verify that reward-optimal policies are maximally safe.

Builds the explicit product of the small world and the wood-tracking
safeguard for several penalty magnitudes and checks that the
value-iteration policy attains the maximal safety probability at the
start state.
"""

import sys

from safegrid import load_fixture_map, load_fixture_safeguard
from safegrid.oracle import theorem_check
from safegrid.runtime import RewardSpec

PENALTIES = (-1.0, -10.0, -100.0)


if __name__ == "__main__":
    m = load_fixture_map("theorem5x5.map")
    g = load_fixture_safeguard("minecraft3.sg")
    ok = True
    print("penalty gamma V*(s0) Pr(pi*) Pr_max verdict")
    for p in PENALTIES:
        report = theorem_check(m, g, RewardSpec(penalty=p), gamma=0.95, tolerance=1e-6)
        ok &= report.passed
        print(" ".join(report.row()))
    sys.exit(0 if ok else 1)
