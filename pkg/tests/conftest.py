import numpy as np
import pytest

from safeact.airhockey import TableGeometry, default_constraints
from safeact.dynamics import default_arm


@pytest.fixture(scope="session")
def arm():
    return default_arm()


@pytest.fixture(scope="session")
def table():
    return TableGeometry()


@pytest.fixture(scope="session")
def task_constraints(arm, table):
    return default_constraints(arm, table)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
