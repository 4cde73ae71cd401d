import numpy as np
import pytest

from jumplab.frictionless import AjConfig
from jumplab.model import LogPricePath


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fast_aj():
    """AJ config with a smaller kernel budget for unit tests."""
    return AjConfig(kernel_mc_paths=1_000_000)


def brownian_path(rng, n=23_400, sigma=0.4, horizon=1.0):
    delta = horizon / n
    x = np.concatenate([[0.0], np.cumsum(sigma * np.sqrt(delta) * rng.standard_normal(n))])
    return LogPricePath(x, delta)
