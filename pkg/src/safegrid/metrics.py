"""Per-episode metrics, aggregation across seeds, and CSV I/O.

The CSV schema is one row per (run, episode) with a leading comment
line carrying the schema version.  Floats are written with repr so a
(config, seed) pair always produces byte-identical files; wall time is
kept out of the files for the same reason.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

SCHEMA_LINE = "# safegrid-metrics schema=1"
COLUMNS = ("run_id", "seed", "method", "task_index", "episode",
           "return", "cum_violations", "length")


@dataclass
class RunMetrics:
    """Episode-indexed results for one (seed, method) run of one task."""

    seed: int
    method: str
    returns: np.ndarray
    violations: np.ndarray      # 0/1 per episode
    lengths: np.ndarray
    task_index: np.ndarray
    wall_time: float = 0.0

    @classmethod
    def from_arrays(cls, seed, method, returns, violations, lengths, task_index=0):
        n = len(returns)
        return cls(
            seed=int(seed),
            method=method,
            returns=np.asarray(returns, dtype=float),
            violations=np.asarray(violations, dtype=np.int64),
            lengths=np.asarray(lengths, dtype=np.int64),
            task_index=np.full(n, task_index, dtype=np.int64),
        )

    @property
    def n_episodes(self) -> int:
        return len(self.returns)

    def cumulative_violations(self) -> np.ndarray:
        return np.cumsum(self.violations)


def concat_metrics(parts: list[RunMetrics]) -> RunMetrics:
    """Join consecutive tasks of one run into a single episode sequence."""
    if not parts:
        raise ValueError("nothing to concatenate")
    first = parts[0]
    out = RunMetrics(
        seed=first.seed,
        method=first.method,
        returns=np.concatenate([p.returns for p in parts]),
        violations=np.concatenate([p.violations for p in parts]),
        lengths=np.concatenate([p.lengths for p in parts]),
        task_index=np.concatenate([p.task_index for p in parts]),
        wall_time=sum(p.wall_time for p in parts),
    )
    return out


@dataclass
class AggregateStats:
    """Per-episode mean/std/min/max across seeds (population std)."""

    method: str
    episodes: np.ndarray
    mean_return: np.ndarray
    std_return: np.ndarray
    min_return: np.ndarray
    max_return: np.ndarray
    mean_cum_violations: np.ndarray
    std_cum_violations: np.ndarray
    min_cum_violations: np.ndarray
    max_cum_violations: np.ndarray
    n_runs: int = 0


def aggregate_stats(runs: list[RunMetrics]) -> AggregateStats:
    """Aggregate same-method runs.

    Shorter runs are padded by carrying their final cumulative
    violation count and final return forward, so early-terminating
    sweeps still line up.
    """
    if not runs:
        raise ValueError("no runs to aggregate")
    method = runs[0].method
    for r in runs[1:]:
        if r.method != method:
            raise ValueError("cannot aggregate runs of different methods")
    n = max(r.n_episodes for r in runs)
    rets = np.zeros((len(runs), n))
    cums = np.zeros((len(runs), n))
    for i, r in enumerate(runs):
        k = r.n_episodes
        rets[i, :k] = r.returns
        cums[i, :k] = r.cumulative_violations()
        if k < n:
            rets[i, k:] = r.returns[-1] if k else 0.0
            cums[i, k:] = cums[i, k - 1] if k else 0.0
    return AggregateStats(
        method=method,
        episodes=np.arange(n),
        mean_return=rets.mean(axis=0),
        std_return=rets.std(axis=0),
        min_return=rets.min(axis=0),
        max_return=rets.max(axis=0),
        mean_cum_violations=cums.mean(axis=0),
        std_cum_violations=cums.std(axis=0),
        min_cum_violations=cums.min(axis=0),
        max_cum_violations=cums.max(axis=0),
        n_runs=len(runs),
    )


def run_id(method: str, seed: int) -> str:
    return f"{method}-{seed}"


def metrics_to_rows(m: RunMetrics) -> list[list[str]]:
    rid = run_id(m.method, m.seed)
    cum = m.cumulative_violations()
    rows = []
    for ep in range(m.n_episodes):
        rows.append([
            rid, str(m.seed), m.method, str(int(m.task_index[ep])), str(ep),
            repr(float(m.returns[ep])), str(int(cum[ep])), str(int(m.lengths[ep])),
        ])
    return rows


def write_metrics_csv(path, runs: list[RunMetrics]) -> None:
    """Write all runs to one CSV atomically (temp file then rename)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    buf.write(SCHEMA_LINE + "\n")
    writer.writerow(COLUMNS)
    for m in runs:
        writer.writerows(metrics_to_rows(m))
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".metrics-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


AGGREGATE_SCHEMA_LINE = "# safegrid-aggregate schema=1 std=population"
AGGREGATE_COLUMNS = (
    "method", "episode",
    "mean_return", "std_return", "min_return", "max_return",
    "mean_cum_violations", "std_cum_violations",
    "min_cum_violations", "max_cum_violations", "n_runs",
)


def write_aggregate_csv(path, runs: list[RunMetrics]) -> None:
    """Aggregate runs by method and write per-episode statistics.

    Every value is recomputable from the per-run CSV; the file exists so
    plots and spreadsheets do not have to redo the grouping.
    """
    by_method: dict[str, list[RunMetrics]] = {}
    for r in runs:
        by_method.setdefault(r.method, []).append(r)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    buf.write(AGGREGATE_SCHEMA_LINE + "\n")
    writer.writerow(AGGREGATE_COLUMNS)
    for method in by_method:
        st = aggregate_stats(by_method[method])
        for i in range(len(st.episodes)):
            writer.writerow([
                method, str(int(st.episodes[i])),
                repr(float(st.mean_return[i])), repr(float(st.std_return[i])),
                repr(float(st.min_return[i])), repr(float(st.max_return[i])),
                repr(float(st.mean_cum_violations[i])),
                repr(float(st.std_cum_violations[i])),
                repr(float(st.min_cum_violations[i])),
                repr(float(st.max_cum_violations[i])),
                str(st.n_runs),
            ])
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".aggregate-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_metrics_csv(path) -> list[RunMetrics]:
    """Read a metrics CSV back into one RunMetrics per run_id."""
    groups: dict[str, dict] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise ValueError(f"unrecognized metrics schema line: {first!r}")
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError("unexpected metrics columns")
        for row in reader:
            rid, seed, method, task, ep, ret, cum, length = row
            g = groups.get(rid)
            if g is None:
                g = {"seed": int(seed), "method": method, "task": [],
                     "ret": [], "cum": [], "len": []}
                groups[rid] = g
                order.append(rid)
            g["task"].append(int(task))
            g["ret"].append(float(ret))
            g["cum"].append(int(cum))
            g["len"].append(int(length))
    out = []
    for rid in order:
        g = groups[rid]
        cum = np.asarray(g["cum"], dtype=np.int64)
        viol = np.diff(cum, prepend=0)
        m = RunMetrics(
            seed=g["seed"],
            method=g["method"],
            returns=np.asarray(g["ret"], dtype=float),
            violations=viol,
            lengths=np.asarray(g["len"], dtype=np.int64),
            task_index=np.asarray(g["task"], dtype=np.int64),
        )
        out.append(m)
    return out
