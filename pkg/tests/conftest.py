import numpy as np
import pytest

from ftg.schedule import linear_schedule


@pytest.fixture(scope="session")
def sched100():
    return linear_schedule(T=100)


@pytest.fixture(scope="session")
def sched1000():
    return linear_schedule()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
