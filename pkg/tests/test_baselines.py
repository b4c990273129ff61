"""Tests for the monitored baselines and the no-transfer safeguarded run."""

from __future__ import annotations

import numpy as np
import pytest

from safegrid.baselines import (
    FearModel,
    fear_train,
    fear_update,
    vanilla_train,
    visited_states,
    zero_shot_train,
)
from safegrid.gridworld import load_map
from safegrid.learner import LearnerConfig, QBank, train_task
from safegrid.rng import RunStreams
from safegrid.runtime import (
    EpisodeStep,
    EpisodeTrace,
    ProductState,
    RewardSpec,
    TERMINAL_HORIZON,
    TERMINAL_VIOLATION,
)
from safegrid.safeguard import parse_safeguard


def _corridor():
    m = load_map("name corridor\ngrid 3 1\nslip 0.0\nhorizon 10\nagent 0 0\n"
                 "cell 2 0 label lava p 1.0 reward 5.0\n"
                 "cell 1 0 reward 1.0")
    g = parse_safeguard("safeguard avoid\nlabels lava\n"
                        "state q0 initial accepting\nstate qu\n"
                        "trans q0 -> qu on lava\ntrans q0 -> q0 on else\n"
                        "trans qu -> qu on true")
    return m, g


# ---------------------------------------------------------------- fear model


def test_fear_model_zero_before_observation():
    f = FearModel.zeros(4)
    assert f.frequency(2) == 0.0


def test_fear_update_safe_episode_credits_all_states():
    f = FearModel.zeros(4)
    fear_update(f, [0, 1, 2], violated=False, radius=2)
    assert f.safe.tolist() == [1.0, 1.0, 1.0, 0.0]
    assert f.danger.sum() == 0.0


def test_fear_update_violation_splits_by_radius():
    f = FearModel.zeros(5)
    fear_update(f, [0, 1, 2, 3], violated=True, radius=2)
    # last two visited states dangerous, earlier ones safe
    assert f.danger.tolist() == [0.0, 0.0, 1.0, 1.0, 0.0]
    assert f.safe.tolist() == [1.0, 1.0, 0.0, 0.0, 0.0]


def test_fear_update_radius_larger_than_episode():
    f = FearModel.zeros(3)
    fear_update(f, [0, 1], violated=True, radius=10)
    assert f.danger.tolist() == [1.0, 1.0, 0.0]
    assert f.safe.sum() == 0.0


def test_fear_frequency_ratio():
    f = FearModel.zeros(2)
    fear_update(f, [0], violated=True, radius=1)
    fear_update(f, [0], violated=False, radius=1)
    fear_update(f, [0], violated=False, radius=1)
    assert f.frequency(0) == pytest.approx(1.0 / 3.0)


def test_visited_states_includes_start():
    m, _ = _corridor()
    tr = EpisodeTrace(
        steps=[
            EpisodeStep(ProductState((0, 0), "q0"), 3, 1.0,
                        ProductState((1, 0), "q0")),
            EpisodeStep(ProductState((1, 0), "q0"), 3, -10.0,
                        ProductState((2, 0), "qu")),
        ],
        terminal=TERMINAL_VIOLATION,
    )
    assert visited_states(m, tr) == [0, 1, 2]


def test_visited_states_empty_trace():
    m, _ = _corridor()
    assert visited_states(m, EpisodeTrace(terminal=TERMINAL_HORIZON)) == []


# ------------------------------------------------------------ training runs


def test_vanilla_counts_violations_without_shaping(minecraft_map, avoid_lava):
    q2, metrics = vanilla_train(minecraft_map, avoid_lava,
                                LearnerConfig(episodes=300, beta=0.2),
                                RunStreams(0))
    assert q2.shape == (minecraft_map.width * minecraft_map.height, 5)
    assert metrics.method == "vanilla"
    assert metrics.n_episodes == 300
    # the monitor fires: some early episodes end in violation
    assert metrics.violations.sum() > 0
    # violations terminate the episode, so violated episodes are shorter
    viol = metrics.violations.astype(bool)
    if viol.any() and (~viol).any():
        assert metrics.lengths[viol].mean() <= metrics.lengths[~viol].mean()


def test_vanilla_is_deterministic_per_seed(minecraft_map, avoid_lava):
    cfg = LearnerConfig(episodes=100)
    a = vanilla_train(minecraft_map, avoid_lava, cfg, RunStreams(3))
    b = vanilla_train(minecraft_map, avoid_lava, cfg, RunStreams(3))
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1].returns, b[1].returns)


def test_fear_train_runs_and_reduces_late_violations(minecraft_map, avoid_lava):
    cfg = LearnerConfig(episodes=600, beta=0.2)
    _, vm = vanilla_train(minecraft_map, avoid_lava, cfg, RunStreams(0))
    _, fm = fear_train(minecraft_map, avoid_lava, cfg, RunStreams(0),
                       fear_weight=2.0, fear_radius=3)
    assert fm.method == "fear"
    # the frequency penalty should not leave the fear agent strictly worse
    # on safety over the second half of training
    half = cfg.episodes // 2
    assert fm.violations[half:].sum() <= vm.violations[half:].sum() + 5


def test_fear_train_validates_arguments(minecraft_map, avoid_lava):
    cfg = LearnerConfig(episodes=1)
    with pytest.raises(ValueError):
        fear_train(minecraft_map, avoid_lava, cfg, RunStreams(0),
                   fear_weight=0.0)
    with pytest.raises(ValueError):
        fear_train(minecraft_map, avoid_lava, cfg, RunStreams(0),
                   fear_radius=0)


def test_zero_shot_equals_train_task_without_transfer():
    m, g = _corridor()
    spec = RewardSpec(penalty=-10.0)
    cfg = LearnerConfig(episodes=200)
    bank_z, mz = zero_shot_train(m, g, spec, cfg, RunStreams(9))
    from dataclasses import replace
    bank_t = QBank(m.width, m.height, g.states)
    bank_t, mt = train_task(m, g, spec, replace(cfg, transfer_enabled=False),
                            bank_t, RunStreams(9))
    assert np.array_equal(bank_z.q3, bank_t.q3)
    assert np.array_equal(mz.returns, mt.returns)
    assert mz.method == "zero_shot"


def test_zero_shot_ignores_transfer_settings():
    m, g = _corridor()
    spec = RewardSpec(penalty=-10.0)
    a, _ = zero_shot_train(m, g, spec,
                           LearnerConfig(episodes=100, transfer_factor=0.9),
                           RunStreams(4))
    b, _ = zero_shot_train(m, g, spec,
                           LearnerConfig(episodes=100, transfer_factor=0.1),
                           RunStreams(4))
    assert np.array_equal(a.q3, b.q3)


def test_vanilla_zero_episodes():
    m, g = _corridor()
    q2, metrics = vanilla_train(m, g, LearnerConfig(episodes=0), RunStreams(0))
    assert not q2.any()
    assert metrics.n_episodes == 0
