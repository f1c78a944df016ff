import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hfm import _accel

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(params=[True, False], ids=["numba", "numpy"])
def kernel_mode(request):
    """Run the test once per kernel implementation."""
    with _accel.use_numba(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
