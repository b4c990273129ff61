"""On-the-fly synchronization of environment and safeguard.

The product of grid and safeguard is never materialized: each step
advances the environment, feeds the arrival label to the safeguard, and
replaces the environment reward with the violation penalty when the
safeguard enters a rejecting sink.  Episodes terminate at the first
violation or at the horizon.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .gridworld import ACTIONS, GridMap, env_step, reset, sample_label
from .safeguard import Safeguard, rejecting_sinks, step as sg_step

TERMINAL_HORIZON = "horizon"
TERMINAL_VIOLATION = "violation"


class ProductState(NamedTuple):
    s: tuple[int, int]
    q: str


@dataclass(frozen=True)
class RewardSpec:
    """Violation penalty; cell and step rewards live on the map."""

    penalty: float = -10.0

    def check_against(self, m: GridMap) -> None:
        if self.penalty >= m.min_cell_reward():
            raise ValueError(
                f"penalty {self.penalty} must be below the minimum cell reward "
                f"{m.min_cell_reward()}"
            )


@dataclass
class EpisodeStep:
    x: ProductState
    a: int
    r: float
    x_next: ProductState


@dataclass
class EpisodeTrace:
    steps: list[EpisodeStep] = field(default_factory=list)
    terminal: str = TERMINAL_HORIZON
    initial_label: frozenset[str] = frozenset()
    labels: list[frozenset[str]] = field(default_factory=list)

    @property
    def episode_return(self) -> float:
        return sum(st.r for st in self.steps)

    @property
    def violated(self) -> bool:
        return self.terminal == TERMINAL_VIOLATION

    def observed_labels(self) -> list[frozenset[str]]:
        """Full label sequence including the start cell's label."""
        return [self.initial_label, *self.labels]


class ContractError(RuntimeError):
    """A runtime contract was breached (e.g. stepping from a sink state)."""


def sync_step(
    m: GridMap,
    g: Safeguard,
    x: ProductState,
    a: int,
    spec: RewardSpec,
    rng: np.random.Generator,
    label_rng: np.random.Generator | None = None,
) -> tuple[ProductState, float, bool, frozenset[str]]:
    """One synchronized step of environment and safeguard.

    Returns ``(x', r, violated, label)`` where ``r`` is the penalty when
    the safeguard enters a rejecting sink and the environment reward
    otherwise.  The observed label is returned for offline monitoring.
    """
    sinks = rejecting_sinks(g)
    if x.q in sinks:
        raise ContractError(f"cannot step from sink state {x.q!r}")
    s_next, r_env, label = env_step(m, x.s, a, rng, label_rng)
    q_next = sg_step(g, x.q, label)
    violated = q_next in sinks
    r = spec.penalty if violated else r_env
    return ProductState(s_next, q_next), r, violated, label


def run_episode(
    m: GridMap,
    g: Safeguard,
    spec: RewardSpec,
    policy: Callable[[ProductState], int],
    H: int,
    rng: np.random.Generator,
    label_rng: np.random.Generator | None = None,
) -> EpisodeTrace:
    """Execute one episode under ``policy``.

    The safeguard consumes the start cell's sampled label before the
    first action, so a start cell can itself be unsafe.  The episode
    ends at the first violation or after ``H`` steps.
    """
    sinks = rejecting_sinks(g)
    lrng = label_rng if label_rng is not None else rng
    s0 = reset(m, rng)
    l0 = sample_label(m, s0, lrng)
    q = sg_step(g, g.initial, l0)
    trace = EpisodeTrace(initial_label=l0)
    if q in sinks:
        trace.terminal = TERMINAL_VIOLATION
        return trace
    x = ProductState(s0, q)
    for _ in range(H):
        a = policy(x)
        x_next, r, violated, label = sync_step(m, g, x, a, spec, rng, label_rng)
        trace.steps.append(EpisodeStep(x, a, r, x_next))
        trace.labels.append(label)
        if violated:
            trace.terminal = TERMINAL_VIOLATION
            return trace
        x = x_next
    trace.terminal = TERMINAL_HORIZON
    return trace


@dataclass
class ViolationCounter:
    count: int = 0


def record_violation(c: ViolationCounter, t: EpisodeTrace) -> ViolationCounter:
    """Increment the cumulative counter iff the episode ended in a violation."""
    if t.violated:
        c.count += 1
    return c


def write_trace_csv(path, traces: list[EpisodeTrace]) -> None:
    """Dump episode traces: episode, t, col, row, q, action, reward, label_set, violated."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "t", "col", "row", "q", "action", "reward", "label_set", "violated"])
        for ep, trace in enumerate(traces):
            for t, st in enumerate(trace.steps):
                is_last = t == len(trace.steps) - 1
                writer.writerow(
                    [
                        ep,
                        t,
                        st.x.s[0],
                        st.x.s[1],
                        st.x.q,
                        ACTIONS[st.a],
                        repr(st.r),
                        "|".join(sorted(trace.labels[t])),
                        int(trace.violated and is_last),
                    ]
                )
