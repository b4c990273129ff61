"""Tabular learner with per-safeguard-state value tables.

One action-value table per safeguard state, Boltzmann exploration with
per-task temperature decay, uniform replay, and TD(0) updates.  When a
safeguard state is synchronized for the first time its table is
initialized from its ancestor states' tables, either as a geometric
average over ancestor levels or as a convex interpolation toward the
closest level (both forms ship; the average is the default).

Across a curriculum of safeguards, tables and visited flags transfer by
state name.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .gridworld import ACTIONS, GridMap
from .metrics import RunMetrics
from .rng import RunStreams, STREAM_POLICY
from .runtime import ProductState, RewardSpec
from .safeguard import Safeguard, ancestors, rejecting_sinks, step as sg_step

TRANSFER_AVERAGE = "average"
TRANSFER_INTERPOLATE = "interpolate"


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.95
    beta: float = 0.1
    transfer_factor: float = 0.5   # geometric bias-transfer factor
    ancestor_depth: int = 1
    tau0: float = 1.0
    tau_decay: float = 0.999
    tau_min: float = 0.05
    batch_size: int = 32
    capacity: int = 100_000
    episodes: int = 5000
    transfer_form: str = TRANSFER_AVERAGE
    transfer_enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if not 0.0 < self.transfer_factor <= 1.0:
            raise ValueError("transfer factor must be in (0, 1]")
        if self.ancestor_depth < 1:
            raise ValueError("ancestor depth must be >= 1")
        if self.tau0 <= 0.0 or self.tau_min <= 0.0:
            raise ValueError("temperatures must be positive")
        if self.batch_size < 1 or self.capacity < 1:
            raise ValueError("batch size and capacity must be >= 1")
        if self.episodes < 0:
            raise ValueError("episode count must be >= 0")
        if self.transfer_form not in (TRANSFER_AVERAGE, TRANSFER_INTERPOLATE):
            raise ValueError(f"unknown transfer form {self.transfer_form!r}")

    def with_episodes(self, episodes: int) -> "LearnerConfig":
        return replace(self, episodes=episodes)


class QBank:
    """Family of action-value tables, one per safeguard state.

    Tables are views into one contiguous (n_q, n_s, n_a) array so the
    training kernel can bootstrap across safeguard states without
    copies.  States start unvisited; the visited flag flips at first
    synchronization.
    """

    def __init__(self, width: int, height: int, states: Sequence[str]):
        self.width = width
        self.height = height
        self.states = tuple(states)
        self.q3 = np.zeros((len(self.states), width * height, len(ACTIONS)))
        self.visited = np.zeros(len(self.states), dtype=bool)
        self._index = {q: i for i, q in enumerate(self.states)}

    def table(self, q: str) -> np.ndarray:
        return self.q3[self._index[q]]

    def is_visited(self, q: str) -> bool:
        return bool(self.visited[self._index[q]])

    def mark_visited(self, q: str) -> None:
        self.visited[self._index[q]] = True

    def state_index(self, pos: tuple[int, int]) -> int:
        return pos[1] * self.width + pos[0]

    def import_from(self, other: "QBank") -> None:
        """Copy same-named tables and visited flags from another bank."""
        if (other.width, other.height) != (self.width, self.height):
            raise ValueError("grid dimensions differ between banks")
        for q, i in self._index.items():
            j = other._index.get(q)
            if j is not None:
                self.q3[i] = other.q3[j]
                self.visited[i] = other.visited[j]

    def save_csv(self, path) -> None:
        """Checkpoint as (q, col, row, action, value) rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["# safegrid-qbank schema=1"])
            writer.writerow(["q", "col", "row", "action", "value", "visited"])
            for i, q in enumerate(self.states):
                vis = int(self.visited[i])
                for s in range(self.width * self.height):
                    for a in range(len(ACTIONS)):
                        v = self.q3[i, s, a]
                        if v != 0.0:
                            writer.writerow([q, s % self.width, s // self.width,
                                             ACTIONS[a], repr(float(v)), vis])

    @classmethod
    def load_csv(cls, path, width: int, height: int, states: Sequence[str]) -> "QBank":
        bank = cls(width, height, states)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            for row in reader:
                if not row or row[0].startswith("#") or row[0] == "q":
                    continue
                q, col, r, action, value, visited = row
                i = bank._index[q]
                s = int(r) * width + int(col)
                bank.q3[i, s, ACTIONS.index(action)] = float(value)
                if int(visited):
                    bank.visited[i] = True
        return bank


@dataclass
class Transition:
    x: ProductState
    a: int
    r: float
    x_next: ProductState
    terminal: bool = False


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling (reference path)."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list[Transition] = []
        self._head = 0

    def __len__(self):
        return len(self.items)

    def append(self, t: Transition) -> None:
        if len(self.items) < self.capacity:
            self.items.append(t)
        else:
            self.items[self._head] = t
            self._head = (self._head + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        return [self.items[rng.integers(0, len(self.items))] for _ in range(n)]


# ---------------------------------------------------------------------------
# Reference (pure-Python) operations
# ---------------------------------------------------------------------------

def boltzmann_probabilities(values: np.ndarray, tau: float) -> np.ndarray:
    """Softmax of values / tau with max-shift for overflow safety."""
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    z = (np.asarray(values, dtype=float) - np.max(values)) / tau
    w = np.exp(z)
    return w / w.sum()

def boltzmann_action(theta_q: np.ndarray, s: int, tau: float, rng: np.random.Generator) -> int:
    """Sample an action index with probability proportional to exp(Q/tau)."""
    probs = boltzmann_probabilities(theta_q[s], tau)
    u = rng.random()
    acc = 0.0
    for a, p in enumerate(probs[:-1]):
        acc += p
        if u < acc:
            return a
    return len(probs) - 1


def td_update(bank: QBank, batch: Iterable[Transition], beta: float, gamma: float) -> QBank:
    """Apply one TD(0) step per transition, in batch order."""
    for t in batch:
        theta = bank.table(t.x.q)
        s = bank.state_index(t.x.s)
        if t.terminal:
            target = t.r
        else:
            target = t.r + gamma * bank.table(t.x_next.q)[bank.state_index(t.x_next.s)].max()
        theta[s, t.a] += beta * (target - theta[s, t.a])
    return bank


def transfer_init(
    bank: QBank,
    g: Safeguard,
    q: str,
    factor: float,
    k: int,
    form: str = TRANSFER_AVERAGE,
) -> QBank:
    """Initialize a newly-visited state's table from its ancestors.

    ``average``: mean of per-level ancestor means weighted by
    factor**(level-1), normalized by the number of populated levels.
    ``interpolate``: move the table a ``factor`` fraction of the way
    toward the level-1 ancestor mean.  Either way the state is marked
    visited; with no populated ancestor level the table is unchanged.
    """
    if bank.is_visited(q):
        raise ValueError(f"state {q!r} is already visited")
    levels = ancestors(g, q, k)
    if form == TRANSFER_AVERAGE:
        acc = np.zeros_like(bank.table(q))
        populated = 0
        for i, level in enumerate(levels):
            members = [p for p in level if bank.is_visited(p)]
            if not members:
                continue
            populated += 1
            mean = sum(bank.table(p) for p in members) / len(members)
            acc += factor**i * mean
        if populated:
            bank.table(q)[:] = acc / populated
    elif form == TRANSFER_INTERPOLATE:
        if levels:
            members = [p for p in levels[0] if bank.is_visited(p)]
            if members:
                mean = sum(bank.table(p) for p in members) / len(members)
                theta = bank.table(q)
                theta += factor * (mean - theta)
    else:
        raise ValueError(f"unknown transfer form {form!r}")
    bank.mark_visited(q)
    return bank


def greedy_policy_indices(bank: QBank, g: Safeguard) -> np.ndarray:
    """Greedy action per product state, in oracle index order (s * n_q + q)."""
    n_q = len(g.states)
    n_s = bank.width * bank.height
    out = np.zeros(n_s * n_q, dtype=np.int64)
    # product index is s * n_q + q, table index is (q, s)
    for qi, q in enumerate(g.states):
        table = bank.q3[bank._index[q]]
        for s in range(n_s):
            out[s * n_q + qi] = table[s].argmax()
    return out


# ---------------------------------------------------------------------------
# Compiled structures for the fast path
# ---------------------------------------------------------------------------

@dataclass
class CompiledEnv:
    n_states: int
    label_sets: list[frozenset[str]]
    lab_n: np.ndarray
    lab_cum: np.ndarray
    lab_id: np.ndarray
    move_next: np.ndarray
    reward_arr: np.ndarray
    starts: np.ndarray
    slip: float
    horizon: int


def compile_env(m: GridMap) -> CompiledEnv:
    cached = m._caches.get("compiled_env")
    if cached is not None:
        return cached
    n_s = m.n_states
    universe: dict[frozenset[str], int] = {frozenset(): 0}
    dists = []
    for s in range(n_s):
        cell = m.cell_at(m.index_state(s))
        entries = []
        for ls, p in cell.label_dist:
            if ls not in universe:
                universe[ls] = len(universe)
            entries.append((universe[ls], p))
        dists.append(entries)
    lmax = max(len(d) for d in dists)
    lab_n = np.zeros(n_s, dtype=np.int64)
    lab_cum = np.zeros((n_s, lmax))
    lab_id = np.zeros((n_s, lmax), dtype=np.int64)
    for s, entries in enumerate(dists):
        lab_n[s] = len(entries)
        acc = 0.0
        for j, (lid, p) in enumerate(entries):
            acc += p
            lab_cum[s, j] = acc
            lab_id[s, j] = lid
    move_next = np.zeros((4, n_s), dtype=np.int64)
    from .gridworld import _clamped_move  # local import avoids a cycle at module load
    for s in range(n_s):
        pos = m.index_state(s)
        for d in range(4):
            move_next[d, s] = m.state_index(_clamped_move(m, pos, d))
    reward_arr = np.array(
        [m.cell_at(m.index_state(s)).reward + m.step_reward for s in range(n_s)]
    )
    starts = np.array(sorted(m.state_index(p) for p in m.starts), dtype=np.int64)
    env = CompiledEnv(
        n_states=n_s,
        label_sets=sorted(universe, key=universe.get),
        lab_n=lab_n,
        lab_cum=lab_cum,
        lab_id=lab_id,
        move_next=move_next,
        reward_arr=reward_arr,
        starts=starts,
        slip=m.slip,
        horizon=m.horizon,
    )
    m._caches["compiled_env"] = env
    return env


@dataclass
class CompiledGuard:
    delta: np.ndarray       # (n_q, n_label_sets) state indices
    sink: np.ndarray        # (n_q,) bool
    q0: int
    anc_states: np.ndarray  # (n_q, depth, n_q)
    anc_count: np.ndarray   # (n_q, depth)
    anc_nlev: np.ndarray    # (n_q,)


def compile_guard(g: Safeguard, env: CompiledEnv, depth: int) -> CompiledGuard:
    n_q = len(g.states)
    delta = np.zeros((n_q, len(env.label_sets)), dtype=np.int64)
    for qi, q in enumerate(g.states):
        for li, ls in enumerate(env.label_sets):
            delta[qi, li] = g.state_index(sg_step(g, q, ls))
    sinks = rejecting_sinks(g)
    sink = np.array([q in sinks for q in g.states])
    anc_states = np.zeros((n_q, depth, n_q), dtype=np.int64)
    anc_count = np.zeros((n_q, depth), dtype=np.int64)
    anc_nlev = np.zeros(n_q, dtype=np.int64)
    for qi, q in enumerate(g.states):
        if q in sinks:
            continue
        levels = ancestors(g, q, depth)
        anc_nlev[qi] = len(levels)
        for lev, members in enumerate(levels):
            ms = sorted(g.state_index(p) for p in members)
            anc_count[qi, lev] = len(ms)
            anc_states[qi, lev, : len(ms)] = ms
    return CompiledGuard(
        delta=delta,
        sink=sink,
        q0=g.state_index(g.initial),
        anc_states=anc_states,
        anc_count=anc_count,
        anc_nlev=anc_nlev,
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train_task(
    m: GridMap,
    g: Safeguard,
    spec: RewardSpec,
    cfg: LearnerConfig,
    bank: QBank,
    streams: RunStreams,
) -> tuple[QBank, RunMetrics]:
    """Train one task: episodes of synchronized stepping with replay TD updates."""
    if bank.states != g.states:
        raise ValueError("bank is not keyed to the safeguard's states")
    env = compile_env(m)
    guard = compile_guard(g, env, cfg.ancestor_depth)
    n_q = len(g.states)
    cap = cfg.capacity
    buf_s = np.zeros((n_q, cap), dtype=np.int64)
    buf_a = np.zeros((n_q, cap), dtype=np.int64)
    buf_r = np.zeros((n_q, cap))
    buf_ns = np.zeros((n_q, cap), dtype=np.int64)
    buf_nq = np.zeros((n_q, cap), dtype=np.int64)
    buf_t = np.zeros((n_q, cap), dtype=np.bool_)
    out_ret = np.zeros(cfg.episodes)
    out_viol = np.zeros(cfg.episodes, dtype=np.int64)
    out_len = np.zeros(cfg.episodes, dtype=np.int64)
    start = time.perf_counter()
    if cfg.episodes > 0:
        _kernels.psl_train(
            bank.q3, bank.visited, guard.sink, guard.delta, guard.q0,
            env.lab_n, env.lab_cum, env.lab_id,
            env.move_next, env.reward_arr, env.starts, env.slip,
            spec.penalty, cfg.episodes, env.horizon,
            cfg.gamma, cfg.beta, cfg.tau0, cfg.tau_decay, cfg.tau_min,
            cfg.batch_size, cfg.transfer_enabled,
            0 if cfg.transfer_form == TRANSFER_AVERAGE else 1,
            cfg.transfer_factor,
            guard.anc_states, guard.anc_count, guard.anc_nlev,
            buf_s, buf_a, buf_r, buf_ns, buf_nq, buf_t,
            streams.state, out_ret, out_viol, out_len,
        )
    metrics = RunMetrics.from_arrays(
        seed=streams.seed,
        method="psl",
        returns=out_ret,
        violations=out_viol,
        lengths=out_len,
        task_index=0,
    )
    metrics.wall_time = time.perf_counter() - start
    return bank, metrics


def run_curriculum(
    m: GridMap,
    curriculum: Sequence[Safeguard],
    spec: RewardSpec,
    cfg: LearnerConfig,
    streams: RunStreams,
    episodes_per_task: Sequence[int] | None = None,
) -> tuple[QBank, list[RunMetrics]]:
    """Train a progression of safeguards, transferring tables by state name."""
    if not curriculum:
        raise ValueError("curriculum is empty")
    alphabet = set(curriculum[0].labels)
    for g in curriculum[1:]:
        if set(g.labels) != alphabet:
            raise ValueError(
                f"safeguard {g.name!r} uses a different alphabet than the curriculum"
            )
    if episodes_per_task is None:
        episodes_per_task = [cfg.episodes] * len(curriculum)
    if len(episodes_per_task) != len(curriculum):
        raise ValueError("one episode budget per task is required")
    bank: QBank | None = None
    all_metrics: list[RunMetrics] = []
    for i, g in enumerate(curriculum):
        new_bank = QBank(m.width, m.height, g.states)
        if bank is not None:
            new_bank.import_from(bank)
        bank = new_bank
        task_cfg = cfg.with_episodes(episodes_per_task[i])
        bank, metrics = train_task(m, g, spec, task_cfg, bank, streams)
        metrics.task_index[:] = i
        all_metrics.append(metrics)
    return bank, all_metrics
