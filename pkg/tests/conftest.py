import numpy as np
import pytest

from elliptic import lattice_from_half_periods


@pytest.fixture(scope='session')
def lemniscatic():
    return lattice_from_half_periods(0.5, 0.5j)


@pytest.fixture(scope='session')
def rectangular():
    return lattice_from_half_periods(0.5, 0.3j)


@pytest.fixture(scope='session')
def generic():
    return lattice_from_half_periods(0.5, 0.2 + 0.35j)


@pytest.fixture(params=['lemniscatic', 'rectangular', 'generic'])
def lattice(request):
    return request.getfixturevalue(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
