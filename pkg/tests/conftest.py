import numpy as np
import pytest

from cfmediate.dgp import DGPConfig, simulate


@pytest.fixture(scope="session")
def big_table():
    """Default DGP at n = 10^6 (dataset, table)."""
    return simulate(DGPConfig(n=1_000_000, seed=11))


@pytest.fixture(scope="session")
def sample():
    """Default DGP at n = 5000."""
    return simulate(DGPConfig(n=5000, seed=3))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
