"""Experiment harness: run curricula across seeds and methods, sweep
penalties, verify optimal-safety claims, and validate inputs.

Results depend only on (config, seed): every run seeds itself from its
own master seed, rows are emitted in a fixed (method, seed) order, and
floats are written with repr, so output files are byte-identical no
matter how many worker processes produced them.
"""

from __future__ import annotations

import csv
import multiprocessing
import os
import sys
from dataclasses import replace

from .baselines import fear_train, vanilla_train, zero_shot_train
from .config import ExperimentConfig
from .gridworld import load_map
from .learner import run_curriculum
from .metrics import (
    RunMetrics,
    concat_metrics,
    run_id,
    write_aggregate_csv,
    write_metrics_csv,
)
from .oracle import theorem_check
from .rng import RunStreams
from .runtime import RewardSpec
from .safeguard import (
    parse_safeguard,
    rejecting_sinks,
    scc_rejecting_components,
    validate_determinism,
)


def load_safeguard_file(path):
    with open(path) as fh:
        return parse_safeguard(fh.read())


def run_single(cfg: ExperimentConfig, method: str, seed: int) -> RunMetrics:
    """One (method, seed) run; self-contained so order of execution is free."""
    m = load_map_file(cfg.map_path)
    curriculum = [load_safeguard_file(p) for p in cfg.curriculum]
    final = curriculum[-1]
    spec = RewardSpec(penalty=cfg.penalty)
    spec.check_against(m)
    streams = RunStreams(seed)
    lcfg = cfg.learner.with_episodes(cfg.episodes_per_task)
    if method == "psl":
        _, parts = run_curriculum(m, curriculum, spec, lcfg, streams)
        metrics = concat_metrics(parts)
        metrics.method = "psl"
        return metrics
    if method == "zero_shot":
        _, metrics = zero_shot_train(m, final, spec, lcfg, streams)
        return metrics
    if method == "vanilla":
        _, metrics = vanilla_train(m, final, lcfg, streams)
        return metrics
    if method == "fear":
        _, metrics = fear_train(m, final, lcfg, streams,
                                fear_weight=cfg.fear_weight,
                                fear_radius=cfg.fear_radius)
        return metrics
    raise ValueError(f"unknown method {method!r}")


def load_map_file(path):
    with open(path) as fh:
        return load_map(fh.read())


def _worker(args):
    cfg, method, seed = args
    return run_single(cfg, method, seed)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[RunMetrics]:
    """All (method, seed) runs, always returned in config order."""
    work = [(cfg, method, seed) for method in cfg.methods for seed in cfg.seeds]
    if jobs > 1 and len(work) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(jobs, len(work))) as pool:
            results = pool.map(_worker, work)
    else:
        results = [_worker(w) for w in work]
    return results


def aggregate_path(metrics_path: str) -> str:
    root, ext = os.path.splitext(metrics_path)
    return f"{root}.agg{ext or '.csv'}"


def cmd_run(cfg: ExperimentConfig, jobs: int = 1, out=None) -> str:
    runs = run_experiment(cfg, jobs=jobs)
    path = out or cfg.out
    write_metrics_csv(path, runs)
    write_aggregate_csv(aggregate_path(path), runs)
    return path


def sweep_penalties(
    cfg: ExperimentConfig,
    penalties,
    jobs: int = 1,
) -> dict[float, list[RunMetrics]]:
    """Re-run the experiment per penalty value.

    Penalties that do not undercut the map's minimum achievable reward
    are rejected up front: the shaping argument needs the violation
    penalty to be the strictly worst outcome.
    """
    m = load_map_file(cfg.map_path)
    for p in penalties:
        RewardSpec(penalty=p).check_against(m)
    out: dict[float, list[RunMetrics]] = {}
    for p in penalties:
        out[p] = run_experiment(replace(cfg, penalty=p), jobs=jobs)
    return out


def cmd_sweep(cfg: ExperimentConfig, penalties, jobs: int = 1, out_dir=".") -> list[str]:
    results = sweep_penalties(cfg, penalties, jobs=jobs)
    paths = []
    os.makedirs(out_dir, exist_ok=True)
    for p, runs in results.items():
        path = os.path.join(out_dir, f"sweep_penalty_{p!r}.csv")
        write_metrics_csv(path, runs)
        paths.append(path)
    summary = os.path.join(out_dir, "sweep_summary.csv")
    with open(summary, "w", newline="") as fh:
        fh.write("# safegrid-sweep schema=1\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["penalty", "run_id", "seed", "method",
                         "episodes", "total_violations", "final_return"])
        for p, runs in results.items():
            for r in runs:
                writer.writerow([
                    repr(float(p)), run_id(r.method, r.seed), str(r.seed),
                    r.method, str(r.n_episodes),
                    str(int(r.violations.sum())),
                    repr(float(r.returns[-1])) if r.n_episodes else repr(0.0),
                ])
    paths.append(summary)
    return paths


def cmd_oracle(cfg: ExperimentConfig, gamma: float | None = None,
               tolerance: float = 1e-6, stream=sys.stdout) -> bool:
    """Verify that the optimal shaped policy is also maximally safe."""
    m = load_map_file(cfg.map_path)
    g = load_safeguard_file(cfg.curriculum[-1])
    spec = RewardSpec(penalty=cfg.penalty)
    report = theorem_check(m, g, spec, gamma if gamma is not None else cfg.learner.gamma,
                           tolerance=tolerance)
    print(report.row(), file=stream)
    return report.passed


def cmd_validate(cfg: ExperimentConfig, stream=sys.stdout) -> bool:
    """Check the map and every safeguard; print sinks and determinism defects."""
    ok = True
    m = load_map_file(cfg.map_path)
    print(f"map: {m.name} {m.width}x{m.height} slip={m.slip} horizon={m.horizon}",
          file=stream)
    for path in cfg.curriculum:
        g = load_safeguard_file(path)
        defects = validate_determinism(g)
        sinks = rejecting_sinks(g)
        sccs = scc_rejecting_components(g)
        scc_states = set().union(*sccs) if sccs else set()
        print(f"safeguard: {g.name} states={len(g.states)} "
              f"sinks={sorted(sinks)} scc_sinks={sorted(scc_states)}", file=stream)
        if scc_states != sinks:
            print("  warning: cycle-based and co-reachability sink sets differ",
                  file=stream)
        if g.labels and set(g.labels) - m.used_labels():
            unused = sorted(set(g.labels) - m.used_labels())
            print(f"  note: labels never emitted by the map: {unused}", file=stream)
        for d in defects:
            ok = False
            print(f"  defect: state {d.state} on {sorted(d.label_set)}: "
                  f"{d.firing} guards fire", file=stream)
    spec = RewardSpec(penalty=cfg.penalty)
    try:
        spec.check_against(m)
    except ValueError as e:
        ok = False
        print(f"penalty check failed: {e}", file=stream)
    return ok
