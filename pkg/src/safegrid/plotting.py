"""Self-contained SVG charts for metrics files.

Two panels: per-episode return (mean with a +-1 std band across seeds)
and cumulative violations, one color per method.  Writing SVG by hand
keeps the plotting dependency-free and the output diffable.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .metrics import AggregateStats, RunMetrics, aggregate_stats

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 360
_ML, _MR, _MT, _MB = 60, 20, 30, 45  # margins


def _fmt(x: float) -> str:
    s = f"{x:.6g}"
    return s


class _Panel:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.elems: list[str] = []
        self.xmin = self.ymin = float("inf")
        self.xmax = self.ymax = float("-inf")
        self.series: list[tuple[str, np.ndarray, np.ndarray, np.ndarray]] = []

    def add(self, name, x, mean, std):
        self.series.append((name, np.asarray(x, float),
                            np.asarray(mean, float), np.asarray(std, float)))

    def _extent(self):
        for _, x, mean, std in self.series:
            self.xmin = min(self.xmin, x.min())
            self.xmax = max(self.xmax, x.max())
            self.ymin = min(self.ymin, (mean - std).min())
            self.ymax = max(self.ymax, (mean + std).max())
        if self.xmin == self.xmax:
            self.xmax = self.xmin + 1.0
        if self.ymin == self.ymax:
            self.ymax = self.ymin + 1.0
        pad = 0.05 * (self.ymax - self.ymin)
        self.ymin -= pad
        self.ymax += pad

    def _sx(self, x):
        return _ML + (x - self.xmin) / (self.xmax - self.xmin) * (_W - _ML - _MR)

    def _sy(self, y):
        return _H - _MB - (y - self.ymin) / (self.ymax - self.ymin) * (_H - _MT - _MB)

    def render(self) -> str:
        self._extent()
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
                 f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">']
        parts.append(f'<rect width="{_W}" height="{_H}" fill="white"/>')
        parts.append(f'<text x="{_W / 2}" y="18" text-anchor="middle" '
                     f'font-size="13">{self.title}</text>')
        # axes with 5 ticks each
        for i in range(5):
            xv = self.xmin + i / 4 * (self.xmax - self.xmin)
            yv = self.ymin + i / 4 * (self.ymax - self.ymin)
            sx, sy = self._sx(xv), self._sy(yv)
            parts.append(f'<line x1="{sx:.1f}" y1="{_MT}" x2="{sx:.1f}" '
                         f'y2="{_H - _MB}" stroke="#eee"/>')
            parts.append(f'<line x1="{_ML}" y1="{sy:.1f}" x2="{_W - _MR}" '
                         f'y2="{sy:.1f}" stroke="#eee"/>')
            parts.append(f'<text x="{sx:.1f}" y="{_H - _MB + 14}" '
                         f'text-anchor="middle">{_fmt(xv)}</text>')
            parts.append(f'<text x="{_ML - 6}" y="{sy + 4:.1f}" '
                         f'text-anchor="end">{_fmt(yv)}</text>')
        parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
                     f'height="{_H - _MT - _MB}" fill="none" stroke="#444"/>')
        parts.append(f'<text x="{_W / 2}" y="{_H - 8}" '
                     f'text-anchor="middle">{self.xlabel}</text>')
        parts.append(f'<text x="14" y="{_H / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 14 {_H / 2})">{self.ylabel}</text>')
        for i, (name, x, mean, std) in enumerate(self.series):
            color = _COLORS[i % len(_COLORS)]
            step = max(1, len(x) // 400)  # thin dense series
            xs, ms, ss = x[::step], mean[::step], std[::step]
            if np.any(ss > 0):
                top = " ".join(f"{self._sx(a):.1f},{self._sy(b):.1f}"
                               for a, b in zip(xs, ms + ss))
                bot = " ".join(f"{self._sx(a):.1f},{self._sy(b):.1f}"
                               for a, b in zip(xs[::-1], (ms - ss)[::-1]))
                parts.append(f'<polygon points="{top} {bot}" fill="{color}" '
                             f'opacity="0.15"/>')
            line = " ".join(f"{self._sx(a):.1f},{self._sy(b):.1f}"
                            for a, b in zip(xs, ms))
            parts.append(f'<polyline points="{line}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
            ly = _MT + 14 + 14 * i
            parts.append(f'<line x1="{_W - _MR - 90}" y1="{ly - 4}" '
                         f'x2="{_W - _MR - 70}" y2="{ly - 4}" stroke="{color}" '
                         f'stroke-width="2"/>')
            parts.append(f'<text x="{_W - _MR - 65}" y="{ly}">{name}</text>')
        parts.append("</svg>")
        return "\n".join(parts)


def smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average; early entries average what exists so far."""
    if window <= 1:
        return np.asarray(values, float)
    v = np.asarray(values, float)
    c = np.cumsum(np.insert(v, 0, 0.0))
    out = np.empty_like(v)
    for i in range(len(v)):
        lo = max(0, i - window + 1)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def plot_metrics(runs: list[RunMetrics], return_path, violations_path,
                 smooth_window: int = 100) -> None:
    by_method: dict[str, list[RunMetrics]] = defaultdict(list)
    for r in runs:
        by_method[r.method].append(r)
    ret_panel = _Panel("Episode return (smoothed)", "episode", "return")
    vio_panel = _Panel("Cumulative violations", "episode", "violations")
    for method in sorted(by_method):
        agg = aggregate_stats(by_method[method])
        ret_panel.add(method, agg.episodes,
                      smooth(agg.mean_return, smooth_window),
                      smooth(agg.std_return, smooth_window))
        vio_panel.add(method, agg.episodes,
                      agg.mean_cum_violations, agg.std_cum_violations)
    with open(return_path, "w") as fh:
        fh.write(ret_panel.render())
    with open(violations_path, "w") as fh:
        fh.write(vio_panel.render())
