import numpy as np
import pytest

from hardboost.benchmark import make_benchmark, standard_benchmark_spec


@pytest.fixture(scope="session")
def standard_benchmark():
    """(bundle, planted hard classes, generating map) for seed 0."""
    return make_benchmark(standard_benchmark_spec(seed=0))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
