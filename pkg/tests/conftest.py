"""
Test configuration and fixtures for the orca-rrt package tests.
"""

import sys
from pathlib import Path

import pytest

from orca_rrt.environment_resolver import get_fixture_directory, load_environment
from orca_rrt.files import load_instance
from orca_rrt.geom import Environment, Polygon, Rect
from orca_rrt.traj import AgentSpec, ProblemInstance

TEST_DIR = Path(__file__).parent
ROOT_DIR = TEST_DIR.parent
CONFIG_DIR = ROOT_DIR / "configs"

# Make tests/oracles.py importable as a plain module.
sys.path.insert(0, str(TEST_DIR))


def square(cx, cy, half):
    """Axis-aligned square obstacle centred on (cx, cy)."""
    return Polygon(
        ((cx - half, cy - half), (cx + half, cy - half), (cx + half, cy + half), (cx - half, cy + half))
    )


@pytest.fixture
def empty_env():
    """The built-in 1000x1000 world without obstacles."""
    return load_environment("empty")


@pytest.fixture
def door_env():
    return load_environment("door")


@pytest.fixture
def square_env():
    """A 200x200 square obstacle in the middle of the world."""
    return Environment(Rect(0, 0, 1000, 1000), (square(500, 500, 100),), name="square")


@pytest.fixture
def single_agent_instance(empty_env):
    """One radius-50 agent crossing 400 units of empty world."""
    return ProblemInstance(empty_env, (AgentSpec((100, 500), (500, 500), 50),))


@pytest.fixture
def parallel_instance(empty_env):
    """Two agents moving in far-apart parallel lanes."""
    return ProblemInstance(
        empty_env,
        (
            AgentSpec((100, 200), (900, 200), 50),
            AgentSpec((100, 800), (900, 800), 50),
        ),
    )


@pytest.fixture
def swap_instance(empty_env):
    """Two radius-50 agents swapping places head-on in the empty world."""
    return ProblemInstance(
        empty_env,
        (
            AgentSpec((300, 500), (700, 500), 50),
            AgentSpec((700, 500), (300, 500), 50),
        ),
    )


@pytest.fixture
def corridor_swap_path():
    return str(Path(get_fixture_directory()) / "corridor-swap.json")


@pytest.fixture
def corridor_swap(corridor_swap_path):
    """Two agents swapping rooms through a one-lane corridor."""
    return load_instance(corridor_swap_path)[0]


@pytest.fixture
def corridor_teams():
    """Two teams of two agents exchanging rooms through a two-lane corridor."""
    return load_instance(Path(get_fixture_directory()) / "corridor-teams.json")[0]


@pytest.fixture
def tiny_config_path():
    return str(CONFIG_DIR / "tiny.yaml")
