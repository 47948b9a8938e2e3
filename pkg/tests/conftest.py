import numpy as np
import pytest

from lpminkowski import spheregrid


@pytest.fixture(scope="session")
def circle256():
    return spheregrid.make_grid(1, 256)


@pytest.fixture(scope="session")
def sphere64():
    return spheregrid.make_grid(2, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
