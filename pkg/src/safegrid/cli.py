"""Command line entry point.

Subcommands: validate (inputs well-formed), run (train and write
metrics), sweep (repeat over penalty values), oracle (optimal-safety
check), plot (SVG charts from a metrics file).  Exit codes: 0 success,
1 a check failed, 2 bad input or usage.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .gridworld import MapError
from .metrics import read_metrics_csv
from .safeguard import SafeguardError


def _add_common(p):
    p.add_argument("--config", required=True, help="experiment INI file")
    p.add_argument("--seeds", help="override seeds, e.g. '0,1,2' or '0..9'")
    p.add_argument("--method", action="append",
                   help="override methods (repeatable)")
    p.add_argument("--out", help="override the output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safegrid",
        description="Safeguarded tabular reinforcement learning on gridworlds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the map and safeguards")
    p.add_argument("--config", required=True)

    p = sub.add_parser("run", help="train and write a metrics CSV")
    _add_common(p)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes (output is identical for any value)")

    p = sub.add_parser("sweep", help="run once per penalty value")
    _add_common(p)
    p.add_argument("--penalties", required=True,
                   help="comma-separated penalty values, e.g. '-1,-10,-100'")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("oracle", help="verify the optimal policy is maximally safe")
    p.add_argument("--config", required=True)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tolerance", type=float, default=1e-6)

    p = sub.add_parser("plot", help="render SVG charts from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out-returns", default="returns.svg")
    p.add_argument("--out-violations", default="violations.svg")
    p.add_argument("--smooth", type=int, default=100)
    return parser


def _overrides(args) -> dict:
    from .config import _parse_seeds
    out = {}
    if getattr(args, "seeds", None):
        out["seeds"] = _parse_seeds(args.seeds)
    if getattr(args, "method", None):
        out["methods"] = tuple(args.method)
    if getattr(args, "out", None):
        out["out"] = args.out
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            from .plotting import plot_metrics
            runs = read_metrics_csv(args.metrics)
            plot_metrics(runs, args.out_returns, args.out_violations,
                         smooth_window=args.smooth)
            print(f"wrote {args.out_returns} and {args.out_violations}")
            return 0

        cfg = load_config(args.config, overrides=_overrides(args))
        from . import harness

        if args.command == "validate":
            return 0 if harness.cmd_validate(cfg) else 1
        if args.command == "run":
            path = harness.cmd_run(cfg, jobs=args.jobs)
            print(f"wrote {path}")
            return 0
        if args.command == "sweep":
            penalties = [float(x) for x in args.penalties.split(",")]
            paths = harness.cmd_sweep(cfg, penalties, jobs=args.jobs,
                                      out_dir=args.out_dir)
            for p in paths:
                print(f"wrote {p}")
            return 0
        if args.command == "oracle":
            ok = harness.cmd_oracle(cfg, gamma=args.gamma,
                                    tolerance=args.tolerance)
            return 0 if ok else 1
    except (ConfigError, SafeguardError, MapError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
