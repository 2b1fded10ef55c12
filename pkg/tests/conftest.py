"""Shared fixtures for the test suite"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.components.physics import PressureLaw, ViscosityPair, total_energy  # noqa: E402
from src.components.state import DIRICHLET, PERIODIC, Grid, InitialData, ScalarField, VectorField  # noqa: E402
from src.components.trajectory import EnergySignal, Trajectory  # noqa: E402


@pytest.fixture
def grid1d():
    return Grid((1.0,), (32,), DIRICHLET)


@pytest.fixture
def periodic1d():
    return Grid((1.0,), (32,), PERIODIC)


@pytest.fixture
def grid2d():
    return Grid((1.0, 1.0), (16, 16), DIRICHLET)


@pytest.fixture
def law():
    return PressureLaw()


@pytest.fixture
def visc():
    return ViscosityPair(mu=0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rest_data(grid: Grid, law: PressureLaw, density: float = 1.0) -> InitialData:
    rho0 = ScalarField.constant(grid, density)
    m0 = VectorField.zeros(grid)
    return InitialData(rho0, m0, total_energy(rho0, m0, law))


def energy_trajectory(grid: Grid, energies, traj_id: str, dt: float = 0.1, left_values=None,
                      rho=None, m=None) -> Trajectory:
    """Trajectory with rest fields (or given samples) and the given energy values"""
    energies = np.asarray(energies, dtype=float)
    n = len(energies)
    times = dt * np.arange(n)
    if rho is None:
        rho = np.ones((n,) + grid.shape)
    if m is None:
        m = np.zeros((n,) + grid.shape + (grid.dimension,))
    return Trajectory(grid, dt, rho, m, EnergySignal(times, energies, left_values), traj_id)
