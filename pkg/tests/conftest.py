import numpy as np
import pytest

from honeycomb_bie.geometry import ObstacleShape
from honeycomb_bie.spectrum import SolverSettings, locate_dirac


@pytest.fixture(scope="session")
def default_dirac():
    return locate_dirac(ObstacleShape(), settings=SolverSettings())


@pytest.fixture(scope="session")
def default_coeffs(default_dirac):
    from honeycomb_bie.perturb import compute_coefficients

    return compute_coefficients(default_dirac, check=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
