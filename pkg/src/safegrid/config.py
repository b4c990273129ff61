"""Experiment configuration from INI files.

One [experiment] section names the map, curriculum, methods, penalty,
seeds, and output path; an optional [learner] section overrides the
learner defaults.  INI keeps the dependency footprint at zero.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .learner import LearnerConfig

METHODS = ("psl", "zero_shot", "vanilla", "fear")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    map_path: str
    curriculum: tuple[str, ...]           # safeguard file paths, in task order
    methods: tuple[str, ...] = ("psl",)
    penalty: float = -10.0
    seeds: tuple[int, ...] = (0,)
    episodes_per_task: int = 5000
    out: str = "metrics.csv"
    fear_weight: float = 1.0
    fear_radius: int = 5
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def __post_init__(self):
        if not self.curriculum:
            raise ConfigError("curriculum must list at least one safeguard file")
        for mth in self.methods:
            if mth not in METHODS:
                raise ConfigError(f"unknown method {mth!r} (choices: {', '.join(METHODS)})")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.episodes_per_task < 0:
            raise ConfigError("episodes_per_task must be >= 0")


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Seed lists accept commas and 'a..b' inclusive ranges."""
    out: list[int] = []
    for part in text.replace(",", " ").split():
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    if "experiment" not in parser:
        raise ConfigError("config needs an [experiment] section")
    exp = parser["experiment"]
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    try:
        cfg = ExperimentConfig(
            map_path=resolve(exp["map"]),
            curriculum=tuple(resolve(p) for p in exp["curriculum"].split()),
            methods=tuple(exp.get("methods", "psl").replace(",", " ").split()),
            penalty=exp.getfloat("penalty", -10.0),
            seeds=_parse_seeds(exp.get("seeds", "0")),
            episodes_per_task=exp.getint("episodes_per_task", 5000),
            out=exp.get("out", "metrics.csv"),
            fear_weight=exp.getfloat("fear_weight", 1.0),
            fear_radius=exp.getint("fear_radius", 5),
            learner=_learner_from(parser),
        )
    except KeyError as e:
        raise ConfigError(f"missing required experiment key: {e.args[0]}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _learner_from(parser: configparser.ConfigParser) -> LearnerConfig:
    if "learner" not in parser:
        return LearnerConfig()
    sec = parser["learner"]
    kwargs = {}
    for f in fields(LearnerConfig):
        if f.name not in sec:
            continue
        if f.type in ("int", int):
            kwargs[f.name] = sec.getint(f.name)
        elif f.type in ("float", float):
            kwargs[f.name] = sec.getfloat(f.name)
        elif f.type in ("bool", bool):
            kwargs[f.name] = sec.getboolean(f.name)
        else:
            kwargs[f.name] = sec.get(f.name)
    try:
        return LearnerConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from None
