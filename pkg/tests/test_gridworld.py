import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import MAP_FIXTURES
from safegrid import load_fixture_map
from safegrid.gridworld import (
    ACTIONS,
    EAST,
    NORTH,
    SOUTH,
    STAY,
    WEST,
    MapError,
    env_step,
    load_map,
    reset,
    sample_label,
    transition_distribution,
)

SMALL = """
name small
grid 3 2
slip 0.1
horizon 7
agent 0 0
step_reward -0.1
cell 2 0 label fire p 0.25 reward 5.0
cell 1 1 reward -2.0
"""


def test_load_map_fields():
    m = load_map(SMALL)
    assert (m.width, m.height, m.slip, m.horizon) == (3, 2, 0.1, 7)
    assert m.starts == ((0, 0),)
    assert m.step_reward == -0.1
    assert m.name == "small"


def test_cell_defaults_and_leftover_mass():
    m = load_map(SMALL)
    cell = m.cell_at((2, 0))
    dist = dict(cell.label_dist)
    assert dist[frozenset(["fire"])] == 0.25
    assert dist[frozenset()] == pytest.approx(0.75)
    assert cell.reward == 5.0
    # untouched cell: empty label set with probability one, reward zero
    blank = m.cell_at((0, 1))
    assert blank.label_dist == ((frozenset(), 1.0),)
    assert blank.reward == 0.0


def test_min_cell_reward_includes_step_reward():
    m = load_map(SMALL)
    assert m.min_cell_reward() == pytest.approx(-2.0 - 0.1)


def test_load_map_errors():
    with pytest.raises(MapError):
        load_map("agent 0 0")                      # missing grid
    with pytest.raises(MapError):
        load_map("grid 2 2")                       # missing agent
    with pytest.raises(MapError):
        load_map("grid 2 2\nslip 1.5\nagent 0 0")  # slip out of range
    with pytest.raises(MapError):
        load_map("grid 2 2\nagent 5 5")            # start out of bounds
    with pytest.raises(MapError):
        load_map("grid 2 2\nagent 0 0\ncell 0 0 reward 1\ncell 0 0 reward 2")
    with pytest.raises(MapError):
        load_map("grid 2 2\nagent 0 0\ncell 0 0 label a p 0.7 label b p 0.7")


@pytest.mark.parametrize("name", MAP_FIXTURES)
def test_shipped_maps_load_and_bound_check(name):
    m = load_fixture_map(name)
    assert m.n_states == m.width * m.height
    for pos in m.starts:
        assert m.in_bounds(pos)
    for pos, cell in m.cells.items():
        assert m.in_bounds(pos)
        total = sum(p for _, p in cell.label_dist)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_state_index_roundtrip():
    m = load_map(SMALL)
    for idx in range(m.n_states):
        assert m.state_index(m.index_state(idx)) == idx


def test_transition_distribution_interior_move():
    m = load_fixture_map("theorem5x5.map")   # slip 0.05
    dist = dict(transition_distribution(m, (2, 2), EAST))
    assert dist[(3, 2)] == pytest.approx(0.95 + 0.05 / 4)
    assert dist[(2, 1)] == pytest.approx(0.05 / 4)
    assert dist[(2, 3)] == pytest.approx(0.05 / 4)
    assert dist[(1, 2)] == pytest.approx(0.05 / 4)


def test_transition_distribution_corner_folds_onto_self():
    m = load_fixture_map("theorem5x5.map")
    dist = dict(transition_distribution(m, (0, 0), NORTH))
    # intended north is blocked; west slip is blocked too
    assert dist[(0, 0)] == pytest.approx(0.95 + 2 * 0.05 / 4)
    assert dist[(1, 0)] == pytest.approx(0.05 / 4)
    assert dist[(0, 1)] == pytest.approx(0.05 / 4)


def test_stay_is_deterministic():
    m = load_fixture_map("theorem5x5.map")
    assert transition_distribution(m, (2, 2), STAY) == [((2, 2), 1.0)]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 24), st.integers(0, 4))
def test_property_transition_rows_sum_to_one(sidx, a):
    m = load_fixture_map("theorem5x5.map")
    dist = transition_distribution(m, m.index_state(sidx), a)
    assert sum(p for _, p in dist) == pytest.approx(1.0, abs=1e-12)
    assert all(p >= 0 for _, p in dist)


def test_zero_slip_moves_are_deterministic():
    m = load_fixture_map("sweep5x5.map")
    assert m.slip == 0.0
    rng = np.random.default_rng(0)
    nxt, _, _ = env_step(m, (1, 2), EAST, rng)
    assert nxt == (2, 2)
    nxt, _, _ = env_step(m, (1, 2), WEST, rng)
    assert nxt == (0, 2)
    nxt, _, _ = env_step(m, (1, 2), STAY, rng)
    assert nxt == (1, 2)


def test_env_step_positions_stay_in_bounds():
    m = load_fixture_map("theorem5x5.map")
    rng = np.random.default_rng(7)
    s = (0, 0)
    for _ in range(500):
        a = int(rng.integers(0, len(ACTIONS)))
        s, _, _ = env_step(m, s, a, rng)
        assert m.in_bounds(s)


def test_env_step_reward_is_arrival_cell_reward():
    m = load_map(SMALL.replace("slip 0.1", "slip 0.0"))
    rng = np.random.default_rng(0)
    nxt, r, _ = env_step(m, (0, 1), EAST, rng)
    assert nxt == (1, 1)
    assert r == pytest.approx(-2.0 - 0.1)


def test_env_step_empirical_matches_exact_distribution():
    m = load_fixture_map("theorem5x5.map")
    rng = np.random.default_rng(123)
    counts: dict[tuple[int, int], int] = {}
    n = 20_000
    for _ in range(n):
        nxt, _, _ = env_step(m, (2, 2), SOUTH, rng)
        counts[nxt] = counts.get(nxt, 0) + 1
    for pos, p in transition_distribution(m, (2, 2), SOUTH):
        assert counts.get(pos, 0) / n == pytest.approx(p, abs=0.01)


def test_sample_label_frequencies():
    m = load_map(SMALL)
    rng = np.random.default_rng(5)
    n = 20_000
    hits = sum("fire" in sample_label(m, (2, 0), rng) for _ in range(n))
    assert hits / n == pytest.approx(0.25, abs=0.02)


def test_reset_uniform_over_starts():
    m = load_map("grid 2 1\nagent 0 0\nagent 1 0")
    rng = np.random.default_rng(11)
    picks = [reset(m, rng) for _ in range(4000)]
    frac = sum(p == (0, 0) for p in picks) / len(picks)
    assert frac == pytest.approx(0.5, abs=0.05)
