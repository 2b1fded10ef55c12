"""Catalog - Named pressure laws, initial-data profiles, schemes and renormalization pairs"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .manufactured import ManufacturedSolution
from .physics import GAMMA_LAW, PressureLaw, ViscosityPair, total_energy
from .state import Grid, InitialData, ScalarField, VectorField
from .systems import LAX_FRIEDRICHS, MACCORMACK
from .weakform import RenormalizationPair, identity_pair, log_pair, rational_pair


def _wiggle_pressure(rho: np.ndarray) -> np.ndarray:
    return rho**2 + 0.5 * rho * np.sin(5.0 * rho)


class Catalog:
    """Catalog of the named building blocks an experiment config can refer to"""

    LAW_PRESETS = {
        "gamma2": {"description": "p = rho^2", "params": {"kind": GAMMA_LAW, "a": 1.0, "gamma": 2.0}},
        "air": {"description": "p = rho^1.4", "params": {"kind": GAMMA_LAW, "a": 1.0, "gamma": 1.4}},
        "stiff": {"description": "p = rho^3", "params": {"kind": GAMMA_LAW, "a": 1.0, "gamma": 3.0}},
        "wiggle": {
            "description": "Tabulated non-monotone p = rho^2 + rho sin(5 rho)/2 on [0, 3]",
            "params": {"kind": "custom_tabulated", "gamma": 2.0},
        },
    }

    PROFILES = {
        "equilibrium": {
            "description": "Uniform density at rest",
            "params": [{"name": "density", "type": "float", "default": 1.0}],
        },
        "gaussian_bump": {
            "description": "Density bump 1 + A exp(-|x - c|^2 / (2 w^2)) at rest",
            "params": [
                {"name": "amplitude", "type": "float", "default": 0.2},
                {"name": "width", "type": "float", "default": 0.1},
            ],
        },
        "uniform_flow": {
            "description": "Uniform density moving with a constant velocity",
            "params": [{"name": "velocity", "type": "list", "default": [0.0]}],
        },
        "manufactured": {
            "description": "Initial slice of the manufactured smooth solution (1D)",
            "params": [{"name": "amplitude", "type": "float", "default": 0.2}],
        },
    }

    SCHEMES = {
        LAX_FRIEDRICHS: "Local Lax-Friedrichs (Rusanov) fluxes, SSP-RK2 in time",
        MACCORMACK: "MacCormack predictor-corrector",
    }

    PAIRS = {
        "identity": "B(z) = z",
        "log": "B(z) = z log(z + eps)",
        "rational": "B(z) = z^2 / (1 + z)",
    }

    @classmethod
    def list_profiles(cls) -> list[str]:
        return sorted(cls.PROFILES)

    @classmethod
    def list_laws(cls) -> list[str]:
        return sorted(cls.LAW_PRESETS)

    @classmethod
    def law(cls, name: str, dimension: int = 1) -> PressureLaw:
        """Pressure law preset by name

        Args:
            name: Preset name from LAW_PRESETS
            dimension: Spatial dimension the law is used in
        """
        if name not in cls.LAW_PRESETS:
            raise ConfigurationError(f"unknown law preset '{name}' (known: {cls.list_laws()})", "law.preset")
        params = dict(cls.LAW_PRESETS[name]["params"])
        if params["kind"] == GAMMA_LAW:
            return PressureLaw(dimension=dimension, **params)
        return PressureLaw.from_function(_wiggle_pressure, rho_max=3.0, gamma=params["gamma"], dimension=dimension)

    @classmethod
    def pair(cls, name: str, log_eps: float = 1e-6) -> RenormalizationPair:
        if name == "identity":
            return identity_pair()
        if name == "log":
            return log_pair(log_eps)
        if name == "rational":
            return rational_pair()
        raise ConfigurationError(f"unknown renormalization pair '{name}' (known: {sorted(cls.PAIRS)})",
                                 "verification.pairs")

    @classmethod
    def initial_data(cls, profile: str, grid: Grid, law: PressureLaw, params: dict,
                     rng: Optional[np.random.Generator] = None, visc: Optional[ViscosityPair] = None) -> InitialData:
        """Build initial data from a named profile

        E0 is the field energy plus `energy_excess`, unless `E0` is given.
        A nonzero `noise` perturbs the density with seeded uniform noise.
        """
        if profile not in cls.PROFILES:
            raise ConfigurationError(f"unknown profile '{profile}' (known: {cls.list_profiles()})",
                                     "initial_data.profile")
        N = grid.dimension
        m = np.zeros(grid.shape + (N,))
        if profile == "equilibrium":
            rho = np.full(grid.shape, float(params.get("density", 1.0)))
        elif profile == "gaussian_bump":
            coords = grid.mesh()
            r2 = sum((x - 0.5 * L) ** 2 for x, L in zip(coords, grid.extents))
            width = float(params.get("width", 0.1))
            rho = 1.0 + float(params.get("amplitude", 0.2)) * np.exp(-r2 / (2.0 * width**2))
        elif profile == "uniform_flow":
            velocity = list(params.get("velocity", [0.0] * N))
            if len(velocity) != N:
                raise ConfigurationError(f"velocity needs {N} components", "initial_data.velocity")
            rho = np.ones(grid.shape)
            m[...] = np.asarray(velocity, dtype=float)
        else:
            if N != 1:
                raise ConfigurationError("the manufactured profile is one-dimensional", "initial_data.profile")
            solution = ManufacturedSolution(float(params.get("amplitude", 0.2)), law, visc or ViscosityPair(0.1))
            rho = solution.density(0.0, grid)
            m = solution.momentum(0.0, grid)

        noise = float(params.get("noise", 0.0))
        if noise:
            rng = rng or np.random.default_rng(0)
            rho = rho * (1.0 + noise * rng.uniform(-1.0, 1.0, size=grid.shape))

        rho0, m0 = ScalarField(grid, rho), VectorField(grid, m)
        explicit = params.get("E0")
        if explicit is not None:
            E0 = float(explicit)
        else:
            E0 = total_energy(rho0, m0, law) + float(params.get("energy_excess", 0.0))
        return InitialData(rho0, m0, E0)
