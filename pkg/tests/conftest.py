import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def steady_amplitude(y, trim=0.25):
    """Peak |y| over the central part of a signal (edges trimmed)."""
    n = len(y)
    k = int(n * trim)
    return np.abs(y[k:n - k]).max()
