import numpy as np
import pytest
from hypothesis import settings

from polykin.quadrature import GridSpec, build_grid

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid_coarse():
    return build_grid(GridSpec.preset("coarse", 2.0))


@pytest.fixture(scope="session")
def grid_default():
    return build_grid(GridSpec.preset("default", 2.0))


@pytest.fixture(scope="session")
def grid_wide():
    """Default resolution, extent sized for temperatures up to 3."""
    return build_grid(GridSpec.for_temperature(2.0, t_max=3.0))


@pytest.fixture(scope="session")
def grids_by_delta():
    cache = {}

    def get(delta, preset="default"):
        key = (delta, preset)
        if key not in cache:
            cache[key] = build_grid(GridSpec.preset(preset, delta))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
