import numpy as np
import pytest

from sktshadow.basis import Domain1D, neumann_eigenpair
from sktshadow.model import Params

WORKED = Params(a1=4.0, a2=2.0, b1=1.0, b2=1.0, c1=1.0, c2=1.0, d1=1.0, beta=0.0)


@pytest.fixture(scope="session")
def worked():
    return WORKED


@pytest.fixture(scope="session")
def mode256():
    return neumann_eigenpair(Domain1D(1.0, 256), 1)


@pytest.fixture(scope="session")
def mode64():
    return neumann_eigenpair(Domain1D(1.0, 64), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
