"""Manufactured - Smooth 1D solution with analytic forcing for convergence studies

rho = 1 + A cos(pi x) e^{-t}, m = (A/pi) sin(pi x) e^{-t} on [0, 1] with
no-slip walls. The continuity equation holds exactly; the momentum equation
holds with the forcing returned by `forcing`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .physics import PressureLaw, ViscosityPair, pressure_derivative, total_energy
from .state import DIRICHLET, Grid, InitialData, ScalarField, VectorField
from .trajectory import EnergySignal, Trajectory


@dataclass(frozen=True)
class ManufacturedSolution:
    amplitude: float = 0.2
    law: PressureLaw = field(default_factory=PressureLaw)
    visc: ViscosityPair = field(default_factory=lambda: ViscosityPair(mu=0.1))

    def __post_init__(self):
        if not 0 < self.amplitude < 1:
            raise ConfigurationError(f"amplitude must lie in (0, 1), got {self.amplitude}", "convergence.amplitude")

    @staticmethod
    def grid(cells: int) -> Grid:
        return Grid((1.0,), (cells,), DIRICHLET)

    def _parts(self, t: float, x: np.ndarray):
        A, s = self.amplitude, math.exp(-t)
        C, S = np.cos(math.pi * x), np.sin(math.pi * x)
        rho = 1.0 + A * C * s
        m = (A / math.pi) * S * s
        return A, s, C, S, rho, m

    def density(self, t: float, grid: Grid) -> np.ndarray:
        return self._parts(t, grid.centers(0))[4]

    def momentum(self, t: float, grid: Grid) -> np.ndarray:
        return self._parts(t, grid.centers(0))[5][:, None]

    def forcing(self, t: float, grid: Grid) -> np.ndarray:
        """f = m_t + (m^2/rho)_x + p_x - kappa u_xx"""
        A, s, C, S, rho, m = self._parts(t, grid.centers(0))
        pi = math.pi
        rho_x = -A * pi * S * s
        rho_xx = -A * pi**2 * C * s
        m_t = -m
        m_x = A * C * s
        m_xx = -A * pi * S * s
        convective = 2.0 * m * m_x / rho - m**2 * rho_x / rho**2
        p_x = np.asarray(pressure_derivative(rho, self.law)) * rho_x
        u_xx = m_xx / rho - 2.0 * m_x * rho_x / rho**2 - m * rho_xx / rho**2 + 2.0 * m * rho_x**2 / rho**3
        kappa = self.visc.planar_coefficient()
        return (m_t + convective + p_x - kappa * u_xx)[:, None]

    def initial_data(self, grid: Grid) -> InitialData:
        rho0 = ScalarField(grid, self.density(0.0, grid))
        m0 = VectorField(grid, self.momentum(0.0, grid))
        return InitialData(rho0, m0, total_energy(rho0, m0, self.law))

    def trajectory(self, cells: int, dt: float, t_end: float) -> Trajectory:
        """Exact solution sampled on the cell centers and the time grid"""
        grid = self.grid(cells)
        steps = int(round(t_end / dt))
        times = dt * np.arange(steps + 1)
        rho = np.stack([self.density(t, grid) for t in times])
        m = np.stack([self.momentum(t, grid) for t in times])
        energy = np.array([
            total_energy(ScalarField(grid, r), VectorField(grid, q), self.law) for r, q in zip(rho, m)
        ])
        return Trajectory(grid, dt, rho, m, EnergySignal(times, energy), f"manufactured-{cells}",
                          {"generator": "manufactured", "amplitude": self.amplitude})
