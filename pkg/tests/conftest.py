"""Shared test equipment.

``random_safeguard`` builds arbitrary valid machines (deterministic and
total by construction: one minterm guard per label set) for equivalence
testing against brute-force graph oracles.  ``brute_force_sinks`` is
that oracle: forward search per state for a path into the accepting
set, written independently of the library's co-reachability code.
"""

from __future__ import annotations

import numpy as np
import pytest

from safegrid import load_fixture_map, load_fixture_safeguard
from safegrid.safeguard import Safeguard, all_label_sets, parse_safeguard, step

LABEL_POOL = ("red", "green", "blue", "gold")

SAFEGUARD_FIXTURES = (
    "minecraft1.sg", "minecraft2.sg", "minecraft3.sg", "minecraft4.sg",
    "minecraft5.sg",
    "arena1.sg", "arena2.sg", "arena3.sg", "arena4.sg",
)

MAP_FIXTURES = (
    "minecraft10.map", "minecraft11.map", "minecraft12.map",
    "minecraft13.map", "minecraft14.map",
    "theorem5x5.map", "sweep5x5.map",
)


def minterm_guard(labels: tuple[str, ...], subset: frozenset[str]) -> str:
    """Guard text true for exactly one label set: a & !b & ... over all atoms."""
    parts = [lab if lab in subset else f"!{lab}" for lab in labels]
    return " & ".join(parts)


def random_safeguard(rng: np.random.Generator) -> Safeguard:
    """A random valid machine: <= 10 states, <= 4 labels, total transitions.

    Goes through the text format so the parser is exercised on every
    generated machine.
    """
    n_labels = int(rng.integers(1, len(LABEL_POOL) + 1))
    labels = LABEL_POOL[:n_labels]
    n_states = int(rng.integers(2, 11))
    states = [f"q{i}" for i in range(n_states)]
    n_accept = int(rng.integers(1, n_states + 1))
    accepting = set(rng.choice(n_states, size=n_accept, replace=False).tolist())
    lines = ["safeguard random-machine", "labels " + " ".join(labels)]
    for i, st in enumerate(states):
        flags = " initial" if i == 0 else ""
        flags += " accepting" if i in accepting else ""
        lines.append(f"state {st}{flags}")
    subsets = all_label_sets(labels)
    for st in states:
        for ls in subsets:
            dst = states[int(rng.integers(0, n_states))]
            lines.append(f"trans {st} -> {dst} on {minterm_guard(labels, ls)}")
    return parse_safeguard("\n".join(lines))


def brute_force_sinks(g: Safeguard) -> frozenset[str]:
    """States with no path to an accepting state, by forward search."""
    out = set()
    for start in g.states:
        seen = {start}
        frontier = [start]
        found = start in g.accepting
        while frontier and not found:
            q = frontier.pop()
            for ls in all_label_sets(g.labels):
                nxt = step(g, q, ls)
                if nxt in g.accepting:
                    found = True
                    break
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        if not found:
            out.add(start)
    return frozenset(out)


def random_trace(g: Safeguard, rng: np.random.Generator, max_len: int = 50):
    """A random label-set trace over the machine's alphabet."""
    length = int(rng.integers(0, max_len + 1))
    trace = []
    for _ in range(length):
        mask = rng.random(len(g.labels)) < 0.4
        trace.append(frozenset(lab for lab, m in zip(g.labels, mask) if m))
    return trace


@pytest.fixture(scope="session")
def minecraft_curriculum():
    return [load_fixture_safeguard(f"minecraft{i}.sg") for i in range(1, 6)]


@pytest.fixture(scope="session")
def minecraft_map():
    return load_fixture_map("minecraft10.map")


@pytest.fixture(scope="session")
def small_map():
    return load_fixture_map("theorem5x5.map")


@pytest.fixture(scope="session")
def avoid_lava():
    return load_fixture_safeguard("minecraft1.sg")
