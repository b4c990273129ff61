"""Safeguarded tabular reinforcement learning on stochastic gridworlds.

Finite-state safeguards over label sets shape rewards on an unknown
gridworld; a tabular learner transfers safety bias across a curriculum
of progressively stricter safeguards; an exact solver on the explicit
product model verifies optimality and safety claims.
"""

from importlib import resources

from .gridworld import ACTIONS, Cell, GridMap, MapError, load_map
from .learner import LearnerConfig, QBank, run_curriculum, train_task
from .oracle import build_explicit, max_safety_probability, theorem_check, value_iteration
from .rng import RunStreams
from .runtime import ProductState, RewardSpec, run_episode, sync_step
from .safeguard import (
    Safeguard,
    SafeguardError,
    parse_safeguard,
    rejecting_sinks,
    validate_determinism,
)

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path to a bundled safeguard (.sg) or map (.map) file."""
    path = resources.files("safegrid").joinpath("fixtures", name)
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path


def load_fixture_safeguard(name: str) -> Safeguard:
    return parse_safeguard(fixture_path(name).read_text())


def load_fixture_map(name: str) -> GridMap:
    return load_map(fixture_path(name).read_text())
