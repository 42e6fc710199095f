import numpy as np
import pytest

from rseio.plant import benchmark_plant


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def bench():
    """Benchmark plant with mu = 0.8."""
    return benchmark_plant(0.8)
