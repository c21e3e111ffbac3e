import functools

import numpy as np
import pytest

from catwell.params import DimensionlessSystem
from catwell.ramp import live_rate_function
from catwell.spectrum import GridSpec

# reduced system: fast, with a transition that is resolved on a few thousand points
DESK = DimensionlessSystem(r=1e-2, delta=0.1)
DESK_GRID = GridSpec(23.4, 9001)
LAM_START, LAM_END = 0.98, 1.002


@pytest.fixture(scope="session")
def desk():
    return DESK


@pytest.fixture(scope="session")
def desk_grid():
    return DESK_GRID


@pytest.fixture(scope="session")
def desk_rate():
    """Cached live rate function on the coarse desk grid (lambda -> 1/s at Omega = 2 pi)."""
    return functools.lru_cache(maxsize=None)(live_rate_function(DESK, 2 * np.pi, DESK_GRID, 10))
