"""Exact computations on the explicit product of grid and safeguard.

This is test equipment: it enumerates the full product state space,
builds the exact transition kernel (label distributions marginalized
into safeguard moves), and solves for optimal values, maximal safety
probabilities, and policy-induced absorption probabilities.  Product
states whose safeguard component is a rejecting sink are absorbing with
zero continuation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .gridworld import ACTIONS, GridMap, transition_distribution
from .runtime import RewardSpec
from .safeguard import Safeguard, rejecting_sinks, step as sg_step

MAX_PRODUCT_STATES = 100_000


@dataclass
class ExplicitProductMDP:
    m: GridMap
    g: Safeguard
    spec: RewardSpec
    n_states: int                      # |S x Q|
    n_actions: int
    P: list[sparse.csr_matrix]         # one kernel per action
    reward: np.ndarray                 # (n_states, n_actions) expected shaped reward
    reward_env: np.ndarray             # same, without the violation penalty branch
    sink: np.ndarray                   # bool mask over product states
    start_indices: np.ndarray          # uniform initial distribution support

    def index(self, pos: tuple[int, int], q: str) -> int:
        return self.m.state_index(pos) * len(self.g.states) + self.g.state_index(q)

    def decode(self, idx: int) -> tuple[tuple[int, int], str]:
        n_q = len(self.g.states)
        return self.m.index_state(idx // n_q), self.g.states[idx % n_q]


def build_explicit(m: GridMap, g: Safeguard, spec: RewardSpec) -> ExplicitProductMDP:
    """Enumerate the exact product kernel and expected rewards."""
    n_q = len(g.states)
    n_s = m.n_states
    n_x = n_s * n_q
    if n_x > MAX_PRODUCT_STATES:
        raise ValueError(f"product has {n_x} states, above the {MAX_PRODUCT_STATES} limit")
    n_a = len(ACTIONS)
    sinks = rejecting_sinks(g)
    sink_mask = np.zeros(n_x, dtype=bool)
    for s_idx in range(n_s):
        for q_idx, q in enumerate(g.states):
            if q in sinks:
                sink_mask[s_idx * n_q + q_idx] = True

    # Per arrival cell: distribution over successor safeguard states for
    # each current safeguard state, plus expected environment reward.
    # q-move distribution depends only on (q, arrival cell).
    q_move: list[dict[str, list[tuple[int, float]]]] = []
    arrival_reward = np.zeros(n_s)
    for s_idx in range(n_s):
        pos = m.index_state(s_idx)
        cell = m.cell_at(pos)
        arrival_reward[s_idx] = cell.reward + m.step_reward
        per_q: dict[str, list[tuple[int, float]]] = {}
        for q in g.states:
            acc: dict[int, float] = {}
            for ls, p in cell.label_dist:
                if p <= 0.0:
                    continue
                q2 = g.state_index(sg_step(g, q, ls))
                acc[q2] = acc.get(q2, 0.0) + p
            per_q[q] = sorted(acc.items())
        q_move.append(per_q)

    reward = np.zeros((n_x, n_a))
    reward_env = np.zeros((n_x, n_a))
    P: list[sparse.csr_matrix] = []
    for a in range(n_a):
        rows: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        for s_idx in range(n_s):
            pos = m.index_state(s_idx)
            env_dist = transition_distribution(m, pos, a)
            for q_idx, q in enumerate(g.states):
                x = s_idx * n_q + q_idx
                if sink_mask[x]:
                    rows.append(x)
                    cols.append(x)
                    vals.append(1.0)
                    continue
                r_shaped = 0.0
                r_env = 0.0
                for pos2, p_env in env_dist:
                    s2 = m.state_index(pos2)
                    for q2_idx, p_q in q_move[s2][q]:
                        p = p_env * p_q
                        x2 = s2 * n_q + q2_idx
                        rows.append(x)
                        cols.append(x2)
                        vals.append(p)
                        r_env += p * arrival_reward[s2]
                        if sink_mask[x2]:
                            r_shaped += p * spec.penalty
                        else:
                            r_shaped += p * arrival_reward[s2]
                reward[x, a] = r_shaped
                reward_env[x, a] = r_env
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n_x, n_x))
        mat.sum_duplicates()
        P.append(mat)

    start = np.array(
        sorted(m.state_index(pos) * n_q + g.state_index(g.initial) for pos in m.starts),
        dtype=np.int64,
    )
    return ExplicitProductMDP(
        m=m,
        g=g,
        spec=spec,
        n_states=n_x,
        n_actions=n_a,
        P=P,
        reward=reward,
        reward_env=reward_env,
        sink=sink_mask,
        start_indices=start,
    )


def value_iteration(
    p: ExplicitProductMDP, gamma: float, tol: float = 1e-10, max_iter: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal values and a greedy policy with declaration-order tie-breaking."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    V = np.zeros(p.n_states)
    for _ in range(max_iter):
        Q = np.stack([p.reward[:, a] + gamma * p.P[a].dot(V) for a in range(p.n_actions)], axis=1)
        V_new = Q.max(axis=1)
        V_new[p.sink] = 0.0
        residual = np.abs(V_new - V).max()
        V = V_new
        if residual < tol:
            break
    Q = np.stack([p.reward[:, a] + gamma * p.P[a].dot(V) for a in range(p.n_actions)], axis=1)
    policy = Q.argmax(axis=1)
    return V, policy


def max_safety_probability(
    p: ExplicitProductMDP, tol: float = 1e-12, max_iter: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """Per-state maximal probability of never entering a sink, plus a maximizing policy.

    Computed as one minus the minimal sink-reachability probability
    (least fixed point, iterated from below).
    """
    u = p.sink.astype(float)
    for _ in range(max_iter):
        cand = np.stack([p.P[a].dot(u) for a in range(p.n_actions)], axis=1)
        u_new = cand.min(axis=1)
        u_new[p.sink] = 1.0
        if np.abs(u_new - u).max() < tol:
            u = u_new
            break
        u = u_new
    cand = np.stack([p.P[a].dot(u) for a in range(p.n_actions)], axis=1)
    policy = cand.argmin(axis=1)
    return 1.0 - u, policy


def _policy_kernel(p: ExplicitProductMDP, policy: np.ndarray) -> sparse.csr_matrix:
    n = p.n_states
    rows = np.arange(n)
    selector = [sparse.csr_matrix((np.ones(np.sum(policy == a)),
                                   (rows[policy == a], rows[policy == a])), shape=(n, n))
                for a in range(p.n_actions)]
    out = sum(selector[a].dot(p.P[a]) for a in range(p.n_actions))
    return sparse.csr_matrix(out)


def policy_safety_probability(
    p: ExplicitProductMDP, policy: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000
) -> np.ndarray:
    """Per-state probability of never entering a sink under a fixed policy."""
    Pk = _policy_kernel(p, policy)
    u = p.sink.astype(float)
    for _ in range(max_iter):
        u_new = Pk.dot(u)
        u_new[p.sink] = 1.0
        if np.abs(u_new - u).max() < tol:
            u = u_new
            break
        u = u_new
    return 1.0 - u


def policy_value(
    p: ExplicitProductMDP,
    policy: np.ndarray,
    gamma: float,
    shaped: bool = True,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Discounted value of a fixed policy; ``shaped=False`` drops the penalty branch."""
    Pk = _policy_kernel(p, policy)
    R = p.reward if shaped else p.reward_env
    r_pi = R[np.arange(p.n_states), policy]
    r_pi = np.where(p.sink, 0.0, r_pi)
    V = np.zeros(p.n_states)
    for _ in range(max_iter):
        V_new = r_pi + gamma * Pk.dot(V)
        V_new[p.sink] = 0.0
        if np.abs(V_new - V).max() < tol:
            V = V_new
            break
        V = V_new
    return V


def start_value(p: ExplicitProductMDP, values: np.ndarray) -> float:
    """Average of a per-state quantity over the uniform initial distribution."""
    return float(values[p.start_indices].mean())


@dataclass
class TheoremReport:
    penalty: float
    gamma: float
    v_star_start: float
    pr_star_start: float
    pr_max_start: float
    tolerance: float
    passed: bool

    def row(self) -> list:
        return [
            repr(self.penalty),
            repr(self.gamma),
            repr(self.v_star_start),
            repr(self.pr_star_start),
            repr(self.pr_max_start),
            "pass" if self.passed else "FAIL",
        ]


def theorem_check(
    m: GridMap,
    g: Safeguard,
    spec: RewardSpec,
    gamma: float,
    tolerance: float = 1e-6,
) -> TheoremReport:
    """Verify that the reward-optimal policy is also maximally safe at the start.

    Preconditions: the penalty must lie strictly below the minimum cell
    reward, and a safe policy must exist (maximal safety probability
    positive at the start); both are checked and reported as errors.
    """
    spec.check_against(m)
    p = build_explicit(m, g, spec)
    pr_max, _ = max_safety_probability(p)
    pr_max_start = start_value(p, pr_max)
    if pr_max_start <= 0.0:
        raise ValueError("no safe policy exists from the start states (Pr_max = 0)")
    V, policy = value_iteration(p, gamma, tol=min(1e-10, tolerance / 10))
    pr_pi = policy_safety_probability(p, policy)
    pr_star_start = start_value(p, pr_pi)
    passed = abs(pr_star_start - pr_max_start) <= tolerance
    return TheoremReport(
        penalty=spec.penalty,
        gamma=gamma,
        v_star_start=start_value(p, V),
        pr_star_start=pr_star_start,
        pr_max_start=pr_max_start,
        tolerance=tolerance,
        passed=passed,
    )
