"""
Shared fixtures: a small logged dataset and training configs sized for seconds, not minutes
"""

import numpy as np
import pytest

from proxbellman.bidclick_env import generate_dataset
from proxbellman.config import get_train_config


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run benchmark-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


TINY = dict(steps=12, batch_size=16, hidden=(8,), eval_every=5, eval_states=64, eval_grid=(5, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data():
    return generate_dataset(400, seed=3)


@pytest.fixture
def tiny_cfg():
    def make(variant: str = "full", **overrides):
        return get_train_config(variant, **{**TINY, **overrides})
    return make
