"""Deterministic random streams.

Each run owns one master seed, split into named substreams (env,
labels, policy, replay) so adding a consumer never perturbs the others.
The fast training kernels use a splitmix64 stream per name; auxiliary
pure-Python code gets numpy Generators derived from the same master
seed.
"""

from __future__ import annotations

import numpy as np

STREAM_ENV = 0
STREAM_LABELS = 1
STREAM_POLICY = 2
STREAM_REPLAY = 3
STREAM_NAMES = ("env", "labels", "policy", "replay")


class RunStreams:
    """Named substreams derived from a single master seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        ss = np.random.SeedSequence(self.seed)
        # one 64-bit splitmix state word per named stream
        self.state = ss.generate_state(len(STREAM_NAMES), dtype=np.uint64).copy()

    def generator(self, name: str) -> np.random.Generator:
        """A numpy Generator tied to (seed, stream name), for non-kernel code."""
        idx = STREAM_NAMES.index(name)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(idx,)))


def splitmix64(state: np.ndarray, i: int) -> int:
    """Reference implementation of the kernel stream; advances state[i]."""
    s = (int(state[i]) + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    state[i] = s
    z = s
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def stream_u01(state: np.ndarray, i: int) -> float:
    """Uniform draw in [0, 1) from stream ``i``; mirrors the kernel math."""
    return (splitmix64(state, i) >> 11) * (1.0 / 9007199254740992.0)
