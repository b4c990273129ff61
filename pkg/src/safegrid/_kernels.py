"""Numba-jitted training loops.

These kernels are the production fast path for the tabular learners;
the module-level operations they compose (Boltzmann selection, TD
update, bias transfer, synchronized stepping) also exist as pure-Python
functions and the two are cross-checked in the test suite.

All randomness comes from four splitmix64 substreams (env, labels,
policy, replay) held in a uint64 state vector, so runs are bit-level
deterministic for a given master seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .rng import STREAM_ENV, STREAM_LABELS, STREAM_POLICY, STREAM_REPLAY

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _u01(state, i):
    s = state[i] + _GOLDEN
    state[i] = s
    z = s
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def _boltzmann(Q3, q, s, tau, state):
    n_a = Q3.shape[2]
    m = Q3[q, s, 0]
    for a in range(1, n_a):
        if Q3[q, s, a] > m:
            m = Q3[q, s, a]
    tot = 0.0
    for a in range(n_a):
        tot += np.exp((Q3[q, s, a] - m) / tau)
    u = _u01(state, STREAM_POLICY) * tot
    acc = 0.0
    for a in range(n_a - 1):
        acc += np.exp((Q3[q, s, a] - m) / tau)
        if u < acc:
            return a
    return n_a - 1


@njit(cache=True, inline="always")
def _sample_label(lab_n, lab_cum, lab_id, s, state):
    u = _u01(state, STREAM_LABELS)
    n = lab_n[s]
    for j in range(n - 1):
        if u < lab_cum[s, j]:
            return lab_id[s, j]
    return lab_id[s, n - 1]


@njit(cache=True, inline="always")
def _env_move(move_next, slip, s, a, state):
    if a == 4:  # stay is slip-exempt
        return s
    d = a
    if slip > 0.0 and _u01(state, STREAM_ENV) < slip:
        d = int(_u01(state, STREAM_ENV) * 4.0)
    return move_next[d, s]


@njit(cache=True)
def _transfer(Q3, visited, q, enabled, form, factor, anc_states, anc_count, anc_nlev):
    # First synchronization of safeguard state q: import ancestor bias.
    if enabled and not visited[q]:
        n_s = Q3.shape[1]
        n_a = Q3.shape[2]
        if form == 0:  # geometric average over populated ancestor levels
            tmp = np.zeros((n_s, n_a))
            kprime = 0
            w = 1.0
            for lev in range(anc_nlev[q]):
                cnt = 0
                for j in range(anc_count[q, lev]):
                    if visited[anc_states[q, lev, j]]:
                        cnt += 1
                if cnt > 0:
                    kprime += 1
                    scale = w / cnt
                    for j in range(anc_count[q, lev]):
                        p = anc_states[q, lev, j]
                        if visited[p]:
                            for si in range(n_s):
                                for ai in range(n_a):
                                    tmp[si, ai] += scale * Q3[p, si, ai]
                w *= factor
            if kprime > 0:
                inv = 1.0 / kprime
                for si in range(n_s):
                    for ai in range(n_a):
                        Q3[q, si, ai] = tmp[si, ai] * inv
        else:  # convex interpolation toward the level-1 mean
            if anc_nlev[q] > 0:
                cnt = 0
                for j in range(anc_count[q, 0]):
                    if visited[anc_states[q, 0, j]]:
                        cnt += 1
                if cnt > 0:
                    for si in range(n_s):
                        for ai in range(n_a):
                            mean = 0.0
                            for j in range(anc_count[q, 0]):
                                p = anc_states[q, 0, j]
                                if visited[p]:
                                    mean += Q3[p, si, ai]
                            mean /= cnt
                            Q3[q, si, ai] += factor * (mean - Q3[q, si, ai])
    visited[q] = True


@njit(cache=True, inline="always")
def _replay_update(Q3, q, beta, gamma, batch,
                   buf_s, buf_a, buf_r, buf_ns, buf_nq, buf_t, size, state):
    n_a = Q3.shape[2]
    for _ in range(batch):
        j = int(_u01(state, STREAM_REPLAY) * size)
        bs = buf_s[q, j]
        ba = buf_a[q, j]
        tgt = buf_r[q, j]
        if not buf_t[q, j]:
            nq = buf_nq[q, j]
            ns = buf_ns[q, j]
            mx = Q3[nq, ns, 0]
            for a in range(1, n_a):
                if Q3[nq, ns, a] > mx:
                    mx = Q3[nq, ns, a]
            tgt += gamma * mx
        Q3[q, bs, ba] += beta * (tgt - Q3[q, bs, ba])


@njit(cache=True)
def psl_train(
    Q3, visited, sink, delta, q0_idx,
    lab_n, lab_cum, lab_id,
    move_next, reward_arr, starts, slip,
    penalty, episodes, H,
    gamma, beta, tau0, tau_decay, tau_min,
    batch, transfer_enabled, transfer_form, transfer_factor,
    anc_states, anc_count, anc_nlev,
    buf_s, buf_a, buf_r, buf_ns, buf_nq, buf_t,
    state, out_ret, out_viol, out_len,
):
    cap = buf_s.shape[1]
    n_q = Q3.shape[0]
    sizes = np.zeros(n_q, np.int64)
    heads = np.zeros(n_q, np.int64)
    tau = tau0
    for ep in range(episodes):
        if ep > 0:
            tau *= tau_decay
        t_eff = tau if tau > tau_min else tau_min
        s = starts[int(_u01(state, STREAM_ENV) * len(starts))]
        lid = _sample_label(lab_n, lab_cum, lab_id, s, state)
        q = delta[q0_idx, lid]
        ret = 0.0
        length = 0
        viol = 0
        if sink[q]:
            viol = 1
        else:
            _transfer(Q3, visited, q, transfer_enabled, transfer_form,
                      transfer_factor, anc_states, anc_count, anc_nlev)
            for _t in range(H):
                a = _boltzmann(Q3, q, s, t_eff, state)
                ns = _env_move(move_next, slip, s, a, state)
                lid = _sample_label(lab_n, lab_cum, lab_id, ns, state)
                nq = delta[q, lid]
                violated = sink[nq]
                if violated:
                    r = penalty
                else:
                    r = reward_arr[ns]
                h = heads[q]
                buf_s[q, h] = s
                buf_a[q, h] = a
                buf_r[q, h] = r
                buf_ns[q, h] = ns
                buf_nq[q, h] = nq
                buf_t[q, h] = violated
                heads[q] = (h + 1) % cap
                if sizes[q] < cap:
                    sizes[q] += 1
                _replay_update(Q3, q, beta, gamma, batch,
                               buf_s, buf_a, buf_r, buf_ns, buf_nq, buf_t,
                               sizes[q], state)
                ret += r
                length += 1
                if violated:
                    viol = 1
                    break
                s = ns
                q = nq
                if not visited[q]:
                    _transfer(Q3, visited, q, transfer_enabled, transfer_form,
                              transfer_factor, anc_states, anc_count, anc_nlev)
        out_ret[ep] = ret
        out_viol[ep] = viol
        out_len[ep] = length


@njit(cache=True)
def baseline_train(
    Q2, sink, delta, q0_idx,
    lab_n, lab_cum, lab_id,
    move_next, reward_arr, starts, slip,
    episodes, H,
    gamma, beta, tau0, tau_decay, tau_min,
    batch, fear_weight, fear_radius,
    danger, safe,
    buf_s, buf_a, buf_r, buf_ns, buf_t,
    state, out_ret, out_viol, out_len,
):
    """Environment-reward Q-learning with a passive safeguard monitor.

    The monitor terminates the episode and counts a violation when it
    enters a sink, but never contributes reward.  ``fear_weight`` = 0
    recovers the plain baseline; otherwise the TD target is reduced by
    ``fear_weight * F(s')`` where F is the catastrophe frequency
    estimate, updated from the visit window after each episode.
    """
    cap = buf_s.shape[0]
    size = 0
    head = 0
    n_a = Q2.shape[1]
    path = np.zeros(H + 1, np.int64)
    tau = tau0
    for ep in range(episodes):
        if ep > 0:
            tau *= tau_decay
        t_eff = tau if tau > tau_min else tau_min
        s = starts[int(_u01(state, STREAM_ENV) * len(starts))]
        lid = _sample_label(lab_n, lab_cum, lab_id, s, state)
        q = delta[q0_idx, lid]
        ret = 0.0
        length = 0
        viol = 0
        path[0] = s
        if sink[q]:
            viol = 1
        else:
            for _t in range(H):
                # Boltzmann over the env-state table
                m = Q2[s, 0]
                for a2 in range(1, n_a):
                    if Q2[s, a2] > m:
                        m = Q2[s, a2]
                tot = 0.0
                for a2 in range(n_a):
                    tot += np.exp((Q2[s, a2] - m) / t_eff)
                u = _u01(state, STREAM_POLICY) * tot
                acc = 0.0
                a = n_a - 1
                for a2 in range(n_a - 1):
                    acc += np.exp((Q2[s, a2] - m) / t_eff)
                    if u < acc:
                        a = a2
                        break
                ns = _env_move(move_next, slip, s, a, state)
                lid = _sample_label(lab_n, lab_cum, lab_id, ns, state)
                nq = delta[q, lid]
                violated = sink[nq]
                r = reward_arr[ns]
                buf_s[head] = s
                buf_a[head] = a
                buf_r[head] = r
                buf_ns[head] = ns
                buf_t[head] = violated
                head = (head + 1) % cap
                if size < cap:
                    size += 1
                for _b in range(batch):
                    j = int(_u01(state, STREAM_REPLAY) * size)
                    bs = buf_s[j]
                    bns = buf_ns[j]
                    tgt = buf_r[j]
                    if not buf_t[j]:
                        mx = Q2[bns, 0]
                        for a2 in range(1, n_a):
                            if Q2[bns, a2] > mx:
                                mx = Q2[bns, a2]
                        tgt += gamma * mx
                    if fear_weight > 0.0:
                        tot_obs = danger[bns] + safe[bns]
                        if tot_obs > 0.0:
                            tgt -= fear_weight * (danger[bns] / tot_obs)
                    Q2[bs, buf_a[j]] += beta * (tgt - Q2[bs, buf_a[j]])
                ret += r
                length += 1
                path[length] = ns
                if violated:
                    viol = 1
                    break
                s = ns
                q = nq
        # fear bookkeeping: window of the last fear_radius visited states
        n_visited = length + 1
        if viol == 1:
            lo = n_visited - fear_radius
            if lo < 0:
                lo = 0
            for i in range(n_visited):
                if i >= lo:
                    danger[path[i]] += 1.0
                else:
                    safe[path[i]] += 1.0
        else:
            for i in range(n_visited):
                safe[path[i]] += 1.0
        out_ret[ep] = ret
        out_viol[ep] = viol
        out_len[ep] = length
