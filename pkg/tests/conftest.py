import math
import numpy as np
import pytest

from src.protocols.protocols import BoundaryConditions, angles_from_detunings
from src.solver.solver import solve_for_v


@pytest.fixture(scope="session")
def sweep_bc() -> BoundaryConditions:
    """Detuning swept from -10 Omega to +10 Omega (symmetric passage)."""
    return angles_from_detunings(-10.0, 10.0)


@pytest.fixture(scope="session")
def quarter_bc() -> BoundaryConditions:
    return BoundaryConditions(theta_i=3 * math.pi / 4, theta_f=math.pi / 4)


@pytest.fixture(scope="session")
def solved_035(sweep_bc):
    return solve_for_v(sweep_bc, 0.35)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
