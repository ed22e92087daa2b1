import numpy as np
import pytest

from fasttrees import tensor as T


@pytest.fixture(autouse=True)
def _float64_default():
    """Gradient checks need double precision; restore whatever a test set."""
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
