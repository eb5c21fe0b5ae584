"""Shared scenarios for the test suite."""

import csv
import math

import numpy as np
import pytest

from osc_consensus.cli import assemble
from osc_consensus.config import config_from_text
from osc_consensus.sim import run

FIVE_AGENT_TEXT = """
[system]
m = 2
theta = pi/3

[graph]
source = random
nodes = 5
probability = 0.5

[gains]
epsilon = 0.01
p0 = 10

[quantizer]
levels = 4
levels_initial = 4

[run]
horizon = 6000
seed = 0
"""

DIRECTED_M1_TEXT = """
[system]
m = 1
theta = pi/4

[graph]
source = random
nodes = 6
probability = 0.5
directed = true

[gains]
epsilon = 0.002

[run]
horizon = 8000
seed = 3
rate_tolerance = 0.005
"""

SMALL_TEXT = """
[system]
m = 2
theta = pi/3

[graph]
source = complete
nodes = 4

[gains]
epsilon = 0.01

[run]
horizon = 300
seed = 7
rate_tolerance = 0.05
"""


def read_csv(filename):
    """Header row and data rows of a result CSV."""
    with open(filename, newline="") as f:
        reader = csv.reader(f)
        headers = next(reader)
        return headers, [row for row in reader]


def scenario_from_text(text, overrides=()):
    """Assemble a scenario from config text."""
    return assemble(config_from_text(text, overrides, source="test.cfg"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def five_agent_run():
    """The 5-agent, m = 2 reference run and its scenario."""
    scenario = scenario_from_text(FIVE_AGENT_TEXT)
    return scenario, run(scenario.sim_config)


@pytest.fixture(scope="session")
def directed_m1_run():
    """Second-order agents on a random spanning-tree digraph."""
    scenario = scenario_from_text(DIRECTED_M1_TEXT)
    return scenario, run(scenario.sim_config)


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_TEXT)
    return path


THETA_GRID = np.linspace(math.asin(0.05) + 1e-9, math.pi - math.asin(0.05) - 1e-9, 50)
