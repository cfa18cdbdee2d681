import numpy as np
import pytest
from hypothesis import settings

from coulombgas.core import QuadraticPotential, log_kernel
from coulombgas.equilibrium import solve_equilibrium
from coulombgas.grids import Grid

settings.register_profile("suite", deadline=None, max_examples=30)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def semicircle_solution():
    """1-D equilibrium for V = x^2 on 1024 cells (shared, ~0.1 s)."""
    grid = Grid((-2.0,), (2.0,), (1024,))
    return solve_equilibrium(log_kernel(1), QuadraticPotential(1.0), grid, tol=5e-3)


@pytest.fixture(scope="session")
def disk_solution():
    """2-D equilibrium for V = |x|^2 on a 128^2 grid (shared, a few seconds)."""
    grid = Grid.cube(1.2, 128, 2)
    return solve_equilibrium(log_kernel(2), QuadraticPotential(1.0), grid, tol=5e-3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260815)
