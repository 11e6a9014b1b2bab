import numpy as np
import pytest

from veloreg import make_grid


@pytest.fixture(scope="session")
def g16():
    return make_grid((16, 16, 16))


@pytest.fixture(scope="session")
def g32():
    return make_grid((32, 32, 32))


@pytest.fixture(scope="session")
def g64():
    return make_grid((64, 64, 64))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel(a, b):
    """Relative L2 difference of ``a`` against reference ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
