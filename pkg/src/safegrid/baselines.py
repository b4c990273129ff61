"""Baselines: plain Q-learning, catastrophe-frequency penalization, and
a no-transfer single-task run of the safeguarded learner.

The first two learn over environment states with environment reward
only; the safeguard runs alongside as a passive monitor that terminates
episodes and counts violations without shaping reward.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gridworld import ACTIONS, GridMap
from .learner import (
    LearnerConfig,
    QBank,
    compile_env,
    compile_guard,
    train_task,
)
from .metrics import RunMetrics
from .rng import RunStreams
from .runtime import EpisodeTrace, RewardSpec
from .safeguard import Safeguard


@dataclass
class FearModel:
    """Catastrophe-frequency estimate per environment state.

    F(s) = danger(s) / (danger(s) + safe(s)), zero before any
    observation of s.
    """

    danger: np.ndarray
    safe: np.ndarray

    @classmethod
    def zeros(cls, n_states: int) -> "FearModel":
        return cls(danger=np.zeros(n_states), safe=np.zeros(n_states))

    def frequency(self, s: int) -> float:
        tot = self.danger[s] + self.safe[s]
        return float(self.danger[s] / tot) if tot > 0 else 0.0


def fear_update(model: FearModel, visited: list[int], violated: bool, radius: int) -> FearModel:
    """Credit a finished episode to the model.

    On a violation the last ``radius`` visited states are counted as
    dangerous and the earlier ones as safe; otherwise every visited
    state is safe.
    """
    if violated:
        lo = max(0, len(visited) - radius)
        for i, s in enumerate(visited):
            if i >= lo:
                model.danger[s] += 1.0
            else:
                model.safe[s] += 1.0
    else:
        for s in visited:
            model.safe[s] += 1.0
    return model


def visited_states(m: GridMap, trace: EpisodeTrace) -> list[int]:
    """Environment-state indices touched by a trace, start included."""
    if not trace.steps:
        return []
    out = [m.state_index(trace.steps[0].x.s)]
    for st in trace.steps:
        out.append(m.state_index(st.x_next.s))
    return out


def _monitor_train(
    m: GridMap,
    g: Safeguard,
    cfg: LearnerConfig,
    streams: RunStreams,
    method: str,
    fear_weight: float,
    fear_radius: int,
) -> tuple[np.ndarray, RunMetrics]:
    env = compile_env(m)
    guard = compile_guard(g, env, cfg.ancestor_depth)
    q2 = np.zeros((env.n_states, len(ACTIONS)))
    cap = cfg.capacity
    buf_s = np.zeros(cap, dtype=np.int64)
    buf_a = np.zeros(cap, dtype=np.int64)
    buf_r = np.zeros(cap)
    buf_ns = np.zeros(cap, dtype=np.int64)
    buf_t = np.zeros(cap, dtype=np.bool_)
    danger = np.zeros(env.n_states)
    safe = np.zeros(env.n_states)
    out_ret = np.zeros(cfg.episodes)
    out_viol = np.zeros(cfg.episodes, dtype=np.int64)
    out_len = np.zeros(cfg.episodes, dtype=np.int64)
    start = time.perf_counter()
    if cfg.episodes > 0:
        _kernels.baseline_train(
            q2, guard.sink, guard.delta, guard.q0,
            env.lab_n, env.lab_cum, env.lab_id,
            env.move_next, env.reward_arr, env.starts, env.slip,
            cfg.episodes, env.horizon,
            cfg.gamma, cfg.beta, cfg.tau0, cfg.tau_decay, cfg.tau_min,
            cfg.batch_size, fear_weight, fear_radius,
            danger, safe,
            buf_s, buf_a, buf_r, buf_ns, buf_t,
            streams.state, out_ret, out_viol, out_len,
        )
    metrics = RunMetrics.from_arrays(
        seed=streams.seed,
        method=method,
        returns=out_ret,
        violations=out_viol,
        lengths=out_len,
        task_index=0,
    )
    metrics.wall_time = time.perf_counter() - start
    return q2, metrics


def vanilla_train(
    m: GridMap,
    g: Safeguard,
    cfg: LearnerConfig,
    streams: RunStreams,
) -> tuple[np.ndarray, RunMetrics]:
    """Plain replay Q-learning on environment reward, monitor alongside."""
    return _monitor_train(m, g, cfg, streams, "vanilla",
                          fear_weight=0.0, fear_radius=1)


def fear_train(
    m: GridMap,
    g: Safeguard,
    cfg: LearnerConfig,
    streams: RunStreams,
    fear_weight: float = 1.0,
    fear_radius: int = 5,
) -> tuple[np.ndarray, RunMetrics]:
    """Q-learning whose TD target subtracts a learned catastrophe frequency."""
    if fear_weight <= 0.0:
        raise ValueError("fear weight must be positive")
    if fear_radius < 1:
        raise ValueError("fear radius must be >= 1")
    return _monitor_train(m, g, cfg, streams, "fear",
                          fear_weight=fear_weight, fear_radius=fear_radius)


def zero_shot_train(
    m: GridMap,
    g: Safeguard,
    spec: RewardSpec,
    cfg: LearnerConfig,
    streams: RunStreams,
) -> tuple[QBank, RunMetrics]:
    """Safeguarded learning on the final safeguard only, transfer disabled."""
    from dataclasses import replace
    bank = QBank(m.width, m.height, g.states)
    cold = replace(cfg, transfer_enabled=False)
    bank, metrics = train_task(m, g, spec, cold, bank, streams)
    metrics.method = "zero_shot"
    return bank, metrics
