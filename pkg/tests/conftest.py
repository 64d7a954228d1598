import numpy as np
import pytest

from axmhd import Grid


@pytest.fixture
def grid32():
    return Grid(32, 32)


@pytest.fixture
def grid64():
    return Grid(64, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
