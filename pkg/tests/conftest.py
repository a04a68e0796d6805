import numpy as np
import pytest

import disperlim as dl


@pytest.fixture
def grid2d():
    return dl.build_grid([32, 32], [2 * np.pi, 2 * np.pi])


@pytest.fixture
def grid3d():
    return dl.build_grid([16, 16, 16], [2 * np.pi] * 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
