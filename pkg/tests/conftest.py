import numpy as np
import pytest

from rvlab.fuchsian import Quadrature, octagon_group, rq_basis


@pytest.fixture(scope="session")
def group():
    return octagon_group()


@pytest.fixture(scope="session")
def basis6(group):
    return rq_basis(group, 6, cutoff=2)


@pytest.fixture(scope="session")
def ball():
    return Quadrature.hyperbolic_ball(1.0, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
