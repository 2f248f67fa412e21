import numpy as np
import pytest
from hypothesis import settings

from invade_tree.analytic import TreeParams

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def binary():
    return TreeParams(2)


@pytest.fixture(scope="session")
def ternary():
    return TreeParams(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)
