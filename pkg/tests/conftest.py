import numpy as np
import pytest

from sswave.space import Params, make_grid


@pytest.fixture(scope="session")
def grid64():
    return make_grid(Params(3.0, 3, 64))


@pytest.fixture(scope="session")
def grid128():
    return make_grid(Params(3.0, 3, 128))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
