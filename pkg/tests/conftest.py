"""
Shared fixtures for the FIE benchmark tests
"""

import os
import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.cost import CostSpec
from core.fie import SolverOptions
from core.scenario import ScenarioConfig
from core.system_model import example_system, linear_output_system

RUN_SLOW = os.getenv('FIE_RUN_SLOW') == '1'


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="set FIE_RUN_SLOW=1 to run full-size statistical tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def example():
    """(model, exponential certificate) of the cubic-output example"""
    return example_system()


@pytest.fixture
def model(example):
    return example[0]


@pytest.fixture
def linear_model():
    return linear_output_system()


@pytest.fixture
def small_config():
    return ScenarioConfig(instances=4, horizon=6, seed=7)


@pytest.fixture
def exp_cost():
    return CostSpec.paper_exp()


@pytest.fixture
def smoothed_cost():
    return CostSpec.paper_exp(lambda_w=0.0, lambda_v=0.0)


@pytest.fixture
def fast_solver():
    return SolverOptions(restarts=2)
