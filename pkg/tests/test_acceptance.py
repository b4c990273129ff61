"""End-to-end acceptance suite.

Each test covers one release criterion and prints a single PASS line
with its headline numbers (visible under ``pytest -s`` / in failure
output).  The heavy training criteria share session-scoped result
caches so the suite stays well inside its time budget.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy import stats as scipy_stats

from conftest import brute_force_sinks, random_safeguard
from safegrid import load_fixture_map, load_fixture_safeguard
from safegrid.baselines import vanilla_train, zero_shot_train
from safegrid.config import ExperimentConfig
from safegrid.gridworld import Cell, GridMap, env_step, transition_distribution
from safegrid.harness import cmd_run
from safegrid.learner import (
    LearnerConfig,
    QBank,
    boltzmann_probabilities,
    greedy_policy_indices,
    run_curriculum,
    train_task,
)
from safegrid.oracle import (
    build_explicit,
    policy_value,
    start_value,
    theorem_check,
    value_iteration,
)
from safegrid.rng import RunStreams
from safegrid.runtime import RewardSpec, run_episode
from safegrid.safeguard import (
    is_unsafe_run,
    rejecting_sinks,
    scc_rejecting_components,
)

SEEDS = range(10)
GAMMA = 0.95
PENALTIES = (-1.0, -10.0, -100.0)

SAFEGUARD_FIXTURES = (
    "minecraft1.sg", "minecraft2.sg", "minecraft3.sg", "minecraft4.sg",
    "minecraft5.sg",
    "arena1.sg", "arena2.sg", "arena3.sg", "arena4.sg",
)


def _random_label_map(rng: np.random.Generator, labels) -> GridMap:
    """A small map whose cells emit random label-set distributions."""
    w = h = 3
    cells = {}
    for c in range(w):
        for r in range(h):
            if rng.random() < 0.3:
                continue  # default empty-label cell
            n_entries = int(rng.integers(1, 4))
            probs = rng.dirichlet(np.ones(n_entries + 1))[:n_entries]
            dist = []
            for p in probs:
                mask = rng.random(len(labels)) < 0.5
                ls = frozenset(lab for lab, m in zip(labels, mask) if m)
                dist.append((ls, float(p)))
            leftover = 1.0 - sum(p for _, p in dist)
            dist.append((frozenset(), leftover))
            cells[(c, r)] = Cell(label_dist=tuple(dist),
                                 reward=float(rng.random()))
    return GridMap(width=w, height=h, slip=0.1, horizon=50,
                   starts=((0, 0),), cells=cells)


# --------------------------------------------------------------- criterion 1


def test_criterion_1_monitor_equivalence():
    """Runtime violation flags equal the offline trace verdicts."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(12345)
    spec = RewardSpec(penalty=-1000.0)
    checked = 0
    for _ in range(100):
        g = random_safeguard(rng)
        m = _random_label_map(rng, g.labels)
        for _ in range(10):
            trace = run_episode(m, g, spec,
                                policy=lambda x: int(rng.integers(0, 5)),
                                H=50, rng=rng)
            assert trace.violated == is_unsafe_run(g, trace.observed_labels())
            checked += 1
    elapsed = time.perf_counter() - t0
    assert checked == 1000
    assert elapsed < 10.0
    print(f"\ncriterion 1 PASS: 1000/1000 traces agree ({elapsed:.1f}s)")


# --------------------------------------------------------------- criterion 2


def test_criterion_2_sink_oracle_equivalence():
    """Co-reachability sinks equal brute-force search; fixtures also
    equal the cycle-based computation."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(4242)
    for _ in range(100):
        g = random_safeguard(rng)
        assert rejecting_sinks(g) == brute_force_sinks(g)
    for name in SAFEGUARD_FIXTURES:
        g = load_fixture_safeguard(name)
        sccs = scc_rejecting_components(g)
        scc_states = frozenset().union(*sccs) if sccs else frozenset()
        assert rejecting_sinks(g) == scc_states == brute_force_sinks(g)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(f"\ncriterion 2 PASS: 100 random machines + "
          f"{len(SAFEGUARD_FIXTURES)} fixtures agree ({elapsed:.1f}s)")


# --------------------------------------------------------------- criterion 3


def test_criterion_3_optimal_policy_is_maximally_safe():
    """The reward-optimal policy attains the maximal safety probability
    at the start, for every penalty magnitude."""
    t0 = time.perf_counter()
    m = load_fixture_map("theorem5x5.map")
    g = load_fixture_safeguard("minecraft3.sg")
    gaps = []
    for penalty in PENALTIES:
        rep = theorem_check(m, g, RewardSpec(penalty=penalty), GAMMA,
                            tolerance=1e-6)
        assert rep.passed, f"penalty {penalty}: |gap| > 1e-6"
        gaps.append(abs(rep.pr_star_start - rep.pr_max_start))
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print(f"\ncriterion 3 PASS: max |Pr(pi*) - Pr_max| = {max(gaps):.2e} "
          f"<= 1e-6 ({elapsed:.1f}s)")


# ----------------------------------------------------- criteria 4 and 5 data


@pytest.fixture(scope="module")
def headline_runs():
    """Ten seeds of curriculum training plus both baselines on the
    shipped 10x10 map (penalty -1, beta 0.2, 5000 episodes per task)."""
    m = load_fixture_map("minecraft10.map")
    curriculum = [load_fixture_safeguard(f"minecraft{i}.sg")
                  for i in range(1, 6)]
    final = curriculum[-1]
    spec = RewardSpec(penalty=-1.0)
    cfg = LearnerConfig(episodes=5000, beta=0.2)
    out = []
    for seed in SEEDS:
        _, parts = run_curriculum(m, curriculum, spec, cfg, RunStreams(seed))
        _, zs = zero_shot_train(m, final, spec, cfg, RunStreams(seed))
        _, van = vanilla_train(m, final, cfg, RunStreams(seed))
        out.append({"psl_final": parts[-1], "zero_shot": zs, "vanilla": van})
    return out


def test_criterion_4_curriculum_beats_baselines(headline_runs):
    """Final-task return competitive with vanilla, above zero-shot, with
    far fewer violations; each ordering in >= 8 of 10 seeds."""
    t0 = time.perf_counter()
    a = b = c = 0
    for run in headline_runs:
        psl, zs, van = run["psl_final"], run["zero_shot"], run["vanilla"]
        psl_ret = psl.returns[-1000:].mean()
        if psl_ret >= 0.9 * van.returns[-1000:].mean():
            a += 1
        if zs.returns[-1000:].mean() < psl_ret:
            b += 1
        psl_v = int(psl.violations.sum())
        if psl_v < int(zs.violations.sum()) and \
                int(van.violations.sum()) >= 10 * psl_v:
            c += 1
    elapsed = time.perf_counter() - t0
    assert a >= 8, f"return >= 0.9x vanilla in only {a}/10 seeds"
    assert b >= 8, f"zero-shot below curriculum in only {b}/10 seeds"
    assert c >= 8, f"violation ordering in only {c}/10 seeds"
    print(f"\ncriterion 4 PASS: orderings hold in {a}/10, {b}/10, {c}/10 "
          f"seeds ({elapsed:.1f}s)")


def test_criterion_5_transfer_reduces_early_violations():
    """Warm-starting the fourth safeguard from the first three gives no
    more early violations than a cold start, as a paired median."""
    t0 = time.perf_counter()
    m = load_fixture_map("minecraft10.map")
    curriculum = [load_fixture_safeguard(f"minecraft{i}.sg")
                  for i in range(1, 5)]
    spec = RewardSpec(penalty=-10.0)
    cfg = LearnerConfig(episodes=5000)
    diffs = []
    for seed in SEEDS:
        _, parts = run_curriculum(m, curriculum, spec, cfg, RunStreams(seed),
                                  episodes_per_task=[5000, 5000, 5000, 200])
        warm = int(parts[-1].violations.sum())
        bank = QBank(m.width, m.height, curriculum[-1].states)
        _, cold_metrics = train_task(m, curriculum[-1], spec,
                                     cfg.with_episodes(200), bank,
                                     RunStreams(seed))
        cold = int(cold_metrics.violations.sum())
        diffs.append(warm - cold)
    med = float(np.median(diffs))
    elapsed = time.perf_counter() - t0
    assert med <= 0.0, f"median warm-cold violation difference {med} > 0"
    assert elapsed < 300.0
    print(f"\ncriterion 5 PASS: median paired violation difference "
          f"{med} <= 0 ({elapsed:.1f}s)")


# --------------------------------------------------------------- criterion 6


def test_criterion_6_penalty_sweep_consistency():
    """Harsher penalties never increase median training violations, and
    the greedy policy's unshaped value is penalty-invariant within 5%."""
    t0 = time.perf_counter()
    m = load_fixture_map("sweep5x5.map")
    g = load_fixture_safeguard("minecraft1.sg")
    cfg = LearnerConfig(episodes=3000, beta=0.2)
    med_viol = []
    med_value = []
    for penalty in PENALTIES:
        spec = RewardSpec(penalty=penalty)
        p = build_explicit(m, g, spec)
        viols = []
        values = []
        for seed in SEEDS:
            bank = QBank(m.width, m.height, g.states)
            bank, metrics = train_task(m, g, spec, cfg, bank, RunStreams(seed))
            viols.append(int(metrics.violations.sum()))
            policy = greedy_policy_indices(bank, g)
            env_value = policy_value(p, policy, GAMMA, shaped=False)
            values.append(start_value(p, env_value))
        med_viol.append(float(np.median(viols)))
        med_value.append(float(np.median(values)))
    elapsed = time.perf_counter() - t0
    assert med_viol[0] >= med_viol[1] >= med_viol[2], \
        f"median violations not non-increasing: {med_viol}"
    spread = (max(med_value) - min(med_value)) / abs(max(med_value))
    assert spread <= 0.05, f"greedy return spread {spread:.3f} > 5%"
    print(f"\ncriterion 6 PASS: median violations {med_viol} non-increasing, "
          f"greedy return spread {spread:.3%} ({elapsed:.1f}s)")


# --------------------------------------------------------------- criterion 7


def test_criterion_7_numerical_hygiene():
    """Kernel rows, softmax normalization, solver residuals, and the
    empirical transition law all behave numerically."""
    m = load_fixture_map("theorem5x5.map")
    g = load_fixture_safeguard("minecraft3.sg")
    p = build_explicit(m, g, RewardSpec(penalty=-10.0))
    for a in range(p.n_actions):
        sums = np.asarray(p.P[a].sum(axis=1)).ravel()
        assert np.abs(sums - 1.0).max() <= 1e-12

    rng = np.random.default_rng(0)
    for _ in range(200):
        q_row = rng.uniform(-1e6, 1e6, size=5)
        for tau in (0.05, 1.0, 100.0):
            probs = boltzmann_probabilities(q_row, tau)
            assert np.isfinite(probs).all()
            assert abs(probs.sum() - 1.0) <= 1e-12

    tol = 1e-10
    V, _ = value_iteration(p, GAMMA, tol=tol)
    Q = np.stack([p.reward[:, a] + GAMMA * p.P[a].dot(V)
                  for a in range(p.n_actions)], axis=1)
    bellman = Q.max(axis=1)
    bellman[p.sink] = 0.0
    assert np.abs(bellman - V).max() < tol

    mc = load_fixture_map("minecraft10.map")
    rng = np.random.default_rng(7)
    n = 100_000
    for pos, a in (((4, 4), 0), ((0, 0), 3), ((9, 9), 1)):
        exact = transition_distribution(mc, pos, a)
        index = {dst: i for i, (dst, _) in enumerate(exact)}
        counts = np.zeros(len(exact))
        for _ in range(n):
            nxt, _, _ = env_step(mc, pos, a, rng)
            counts[index[nxt]] += 1
        expected = np.array([p_ for _, p_ in exact]) * n
        chi2, pval = scipy_stats.chisquare(counts, expected)
        assert pval > 1e-3, f"chi2 p-value {pval} at {pos} action {a}"
    print("\ncriterion 7 PASS: kernel rows, softmax, solver residual, "
          "and empirical transitions all within bounds")


# --------------------------------------------------------------- criterion 8


def test_criterion_8_byte_identical_output(tmp_path):
    """Identical config and seeds give byte-identical metrics files,
    independent of worker count."""
    import safegrid
    fixture_dir = safegrid.__path__[0] + "/fixtures"
    cfg = ExperimentConfig(
        map_path=f"{fixture_dir}/theorem5x5.map",
        curriculum=(f"{fixture_dir}/minecraft1.sg",
                    f"{fixture_dir}/minecraft3.sg"),
        methods=("psl", "vanilla"),
        penalty=-10.0,
        seeds=(0, 1, 2),
        episodes_per_task=100,
        learner=LearnerConfig(episodes=100),
    )
    blobs = []
    for i, jobs in enumerate((1, 1, 4)):
        out = tmp_path / f"metrics{i}.csv"
        cmd_run(cfg, jobs=jobs, out=str(out))
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1], "repeat run differs"
    assert blobs[0] == blobs[2], "parallel run differs"
    print("\ncriterion 8 PASS: metrics CSVs byte-identical across repeats "
          "and --jobs 1/4")
