import numpy as np
import pytest

from app.bench.harness import default_setup
from app.discretization.fields import DGSpace
from app.models.mesh import build_uniform_mesh
from app.solver.ocp import optimize

DESK_SUBDIVISIONS = 8
DESK_STEPS = 12
NOMINAL_EPS = 1.0e-2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_space():
    """P1 space on a 2x2 mesh (24 DoF)"""
    return DGSpace(build_uniform_mesh(2), degree=1)


@pytest.fixture(scope="session")
def desk_setup():
    """Rotating-flow problem on the desk grid at the nominal epsilon"""
    return default_setup(DESK_SUBDIVISIONS, DESK_STEPS, NOMINAL_EPS)


@pytest.fixture(scope="session")
def desk_solution(desk_setup):
    """Converged optimum of the desk problem, shared across tests"""
    return optimize(desk_setup)
