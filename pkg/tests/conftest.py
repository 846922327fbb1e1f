import numpy as np
import pytest

import ergocap as ec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def linear2():
    return ec.linear_model(2.0)


@pytest.fixture
def small_noise():
    return ec.uniform_noise(-0.1, 0.1, cells=2)


@pytest.fixture
def unit_init():
    return ec.uniform_init(-1.0, 1.0)
