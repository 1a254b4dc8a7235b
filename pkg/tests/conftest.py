import numpy as np
import pytest

from vesselwave.model import ModelParams, State
from vesselwave.spectral import PeriodicGrid, random_bandlimited


@pytest.fixture
def grid():
    return PeriodicGrid(256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_params(grid):
    """r0 = alpha = beta = 1, no damping."""
    return ModelParams.create(grid)


def random_state(grid, rng, bandwidth=16, scale=0.1):
    eta = random_bandlimited(grid, bandwidth, rng) * scale
    u = random_bandlimited(grid, bandwidth, rng) * scale
    return State(eta - eta.mean, u - u.mean)
