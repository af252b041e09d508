import numpy as np
import pytest

from hapnet.channel import FsoParams
from hapnet.topology import GeometryConfig, build_topology


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fso_params():
    return FsoParams()


@pytest.fixture
def small_topology(rng):
    return build_topology(GeometryConfig(n_haps=3, n_dcs=1, n_users=6), rng)
