import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scatterkit.grids import Field, GridSpec, lp_norm

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def grid1d():
    return GridSpec(1, 16, 4.0)


@pytest.fixture
def grid1d_fine():
    return GridSpec(1, 128, 16.0)


@pytest.fixture
def grid2d():
    return GridSpec(2, 16, 4.0)


def random_field(grid, seed=0, normalize=True):
    rng = np.random.Generator(np.random.PCG64(seed))
    vals = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    f = Field(grid, vals)
    if normalize:
        f = Field(grid, f.values / lp_norm(f, 2))
    return f
