"""Stochastically-labelled gridworld.

A finite grid where each cell carries a probability distribution over
label sets and a scalar reward collected on arrival.  Movement obeys
slip dynamics: a move action goes in the intended direction with
probability ``1 - slip`` and in a uniformly random move direction with
probability ``slip``; ``stay`` is deterministic.  Moves off the border
leave the position unchanged.

Coordinates are ``(col, row)`` with origin at the top-left corner;
``move-north`` decreases the row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIONS: tuple[str, ...] = ("move-north", "move-west", "move-south", "move-east", "stay")
NORTH, WEST, SOUTH, EAST, STAY = range(5)
MOVE_ACTIONS = (NORTH, WEST, SOUTH, EAST)
# (dcol, drow) per action
_DELTAS = ((0, -1), (-1, 0), (0, 1), (1, 0), (0, 0))

TOL_DIST = 1e-9


class MapError(ValueError):
    """Raised for syntax or structural problems in a map document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Cell:
    """Per-cell label distribution and arrival reward.

    ``label_dist`` pairs label sets with probabilities summing to 1;
    unlisted probability mass belongs to the empty label set.
    """

    label_dist: tuple[tuple[frozenset[str], float], ...] = ((frozenset(), 1.0),)
    reward: float = 0.0


DEFAULT_CELL = Cell()


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    slip: float
    horizon: int
    starts: tuple[tuple[int, int], ...]
    cells: dict[tuple[int, int], Cell]
    step_reward: float = 0.0
    name: str = ""
    _caches: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def in_bounds(self, pos: tuple[int, int]) -> bool:
        c, r = pos
        return 0 <= c < self.width and 0 <= r < self.height

    def cell_at(self, pos: tuple[int, int]) -> Cell:
        return self.cells.get(pos, DEFAULT_CELL)

    def state_index(self, pos: tuple[int, int]) -> int:
        c, r = pos
        return r * self.width + c

    def index_state(self, idx: int) -> tuple[int, int]:
        return (idx % self.width, idx // self.width)

    def used_labels(self) -> frozenset[str]:
        labs: set[str] = set()
        for cell in self.cells.values():
            for ls, _ in cell.label_dist:
                labs |= ls
        return frozenset(labs)

    def min_cell_reward(self) -> float:
        """Smallest achievable per-step environment reward (incl. step reward)."""
        rewards = [0.0] + [cell.reward for cell in self.cells.values()]
        return min(rewards) + self.step_reward


def load_map(text: str) -> GridMap:
    """Parse a map document.

    Format (one directive per line, `#` comments ignored)::

        grid W H
        slip p
        horizon H
        agent c r            # repeatable; set of start cells
        step_reward x
        cell c r [label <id> p <prob>]* [reward x]

    Cells not mentioned default to the empty label set with probability 1
    and reward 0.  Leftover probability mass in a cell's label entries is
    assigned to the empty label set.
    """
    width = height = None
    slip = 0.0
    horizon = None
    starts: list[tuple[int, int]] = []
    cells: dict[tuple[int, int], Cell] = {}
    step_reward = 0.0
    name = ""

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "grid":
                width, height = int(parts[1]), int(parts[2])
                if width < 1 or height < 1:
                    raise MapError("grid dimensions must be positive", lineno)
            elif kind == "name":
                name = " ".join(parts[1:])
            elif kind == "slip":
                slip = float(parts[1])
                if not 0.0 <= slip <= 1.0:
                    raise MapError("slip must be in [0, 1]", lineno)
            elif kind == "horizon":
                horizon = int(parts[1])
                if horizon < 1:
                    raise MapError("horizon must be positive", lineno)
            elif kind == "agent":
                starts.append((int(parts[1]), int(parts[2])))
            elif kind == "step_reward":
                step_reward = float(parts[1])
            elif kind == "cell":
                pos = (int(parts[1]), int(parts[2]))
                if pos in cells:
                    raise MapError(f"duplicate cell {pos}", lineno)
                dist: list[tuple[frozenset[str], float]] = []
                reward = 0.0
                i = 3
                while i < len(parts):
                    if parts[i] == "label":
                        if i + 3 >= len(parts) or parts[i + 2] != "p":
                            raise MapError("expected: label <id> p <prob>", lineno)
                        lab = parts[i + 1]
                        prob = float(parts[i + 3])
                        if prob < 0:
                            raise MapError("label probability must be >= 0", lineno)
                        dist.append((frozenset([lab]), prob))
                        i += 4
                    elif parts[i] == "reward":
                        reward = float(parts[i + 1])
                        i += 2
                    else:
                        raise MapError(f"unknown cell attribute {parts[i]!r}", lineno)
                total = sum(p for _, p in dist)
                if total > 1.0 + TOL_DIST:
                    raise MapError(f"cell label probabilities sum to {total} > 1", lineno)
                leftover = 1.0 - total
                if leftover > TOL_DIST:
                    dist.append((frozenset(), leftover))
                cells[pos] = Cell(label_dist=tuple(dist), reward=reward)
            else:
                raise MapError(f"unknown directive {kind!r}", lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MapError):
                raise
            raise MapError(f"malformed directive: {exc}", lineno)

    if width is None or height is None:
        raise MapError("missing 'grid W H' line")
    if not starts:
        raise MapError("missing 'agent c r' line")
    m = GridMap(
        width=width,
        height=height,
        slip=slip,
        horizon=horizon if horizon is not None else 100,
        starts=tuple(starts),
        cells=cells,
        step_reward=step_reward,
        name=name,
    )
    for pos in starts:
        if not m.in_bounds(pos):
            raise MapError(f"start cell {pos} out of bounds")
    for pos in cells:
        if not m.in_bounds(pos):
            raise MapError(f"cell {pos} out of bounds")
    return m


def _clamped_move(m: GridMap, pos: tuple[int, int], action: int) -> tuple[int, int]:
    dc, dr = _DELTAS[action]
    nxt = (pos[0] + dc, pos[1] + dr)
    return nxt if m.in_bounds(nxt) else pos


def reset(m: GridMap, rng: np.random.Generator) -> tuple[int, int]:
    """Sample a start position uniformly from the declared start cells."""
    return m.starts[rng.integers(0, len(m.starts))]


def sample_label(m: GridMap, pos: tuple[int, int], rng: np.random.Generator) -> frozenset[str]:
    """Draw a label set from the cell's label distribution."""
    dist = m.cell_at(pos).label_dist
    u = rng.random()
    acc = 0.0
    for ls, p in dist:
        acc += p
        if u < acc:
            return ls
    return dist[-1][0]


def env_step(
    m: GridMap,
    s: tuple[int, int],
    a: int,
    rng: np.random.Generator,
    label_rng: np.random.Generator | None = None,
) -> tuple[tuple[int, int], float, frozenset[str]]:
    """One environment transition: slip kinematics, arrival reward, label draw.

    ``label_rng`` defaults to ``rng``; passing a separate stream keeps
    movement randomness independent of label randomness.
    """
    if not m.in_bounds(s):
        raise MapError(f"state {s} out of bounds")
    if a == STAY:
        nxt = s
    else:
        direction = a
        if m.slip > 0.0 and rng.random() < m.slip:
            direction = MOVE_ACTIONS[rng.integers(0, 4)]
        nxt = _clamped_move(m, s, direction)
    r_env = m.cell_at(nxt).reward + m.step_reward
    label = sample_label(m, nxt, label_rng if label_rng is not None else rng)
    return nxt, r_env, label


def transition_distribution(
    m: GridMap, s: tuple[int, int], a: int
) -> list[tuple[tuple[int, int], float]]:
    """Exact next-state distribution implied by ``env_step``'s sampling rule."""
    if not m.in_bounds(s):
        raise MapError(f"state {s} out of bounds")
    probs: dict[tuple[int, int], float] = {}
    if a == STAY:
        probs[s] = 1.0
    else:
        probs[_clamped_move(m, s, a)] = 1.0 - m.slip
        for d in MOVE_ACTIONS:
            nxt = _clamped_move(m, s, d)
            probs[nxt] = probs.get(nxt, 0.0) + m.slip / 4.0
    return sorted(probs.items())
