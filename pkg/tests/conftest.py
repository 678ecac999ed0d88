import numpy as np
import pytest

import support


@pytest.fixture
def lqr():
    return support.lqr_problem()


@pytest.fixture
def square_input():
    return support.square_input_problem()


@pytest.fixture
def semiconvex():
    return support.semiconvex_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
