import numpy as np
import pytest

from cornerheat import geometry as geo


@pytest.fixture
def square():
    return geo.unit_square()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
