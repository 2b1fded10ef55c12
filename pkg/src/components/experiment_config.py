"""Experiment Config - Loads, validates and resolves experiment configurations"""

from __future__ import annotations

import copy
import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .bundle_io import load_law_table
from .catalog import Catalog
from .errors import ConfigurationError
from .physics import LAW_KINDS, PressureLaw, ViscosityPair
from .selection import SelectionSchedule, Selector
from .state import BOUNDARIES, Grid, InitialData, ScalarField, VectorField
from .systems import SCHEMES, FamilyConfig, FunnelSystem, SolverConfig, SolverSystem, funnel_grid
from .weakform import Thresholds

SYSTEMS = ("funnel", "ns_1d", "ns_2d")
COMMANDS = ("verify", "select", "semigroup", "convergence")
FIXTURES = ("equilibrium", "increasing_energy")

# Every key a config may contain, with its default. None means "no default".
DEFAULTS: dict[str, Any] = {
    "metadata": {
        "name": "Untitled Experiment",
        "version": "1.0",
        "created_at": None,
        "author": "",
        "description": "",
    },
    "system": "ns_1d",
    "grid": {"extents": [1.0], "cells": [32], "boundary": "dirichlet_noslip"},
    "law": {
        "preset": None,
        "kind": "gamma_law",
        "a": 1.0,
        "gamma": 2.0,
        "a1": 1.0,
        "a2": 1.0,
        "b": 0.0,
        "table": None,
        "table_file": None,
    },
    "viscosity": {"mu": 0.1, "bulk": 0.0},
    "initial_data": {
        "profile": "gaussian_bump",
        "amplitude": 0.2,
        "width": 0.1,
        "density": 1.0,
        "velocity": None,
        "noise": 0.0,
        "E0": None,
        "energy_excess": 0.0,
    },
    "solver": {
        "dt": 1e-3,
        "t_end": 0.1,
        "scheme": "lax_friedrichs_viscous",
        "artificial_viscosity": 0.0,
        "cfl": 0.9,
        "save_every": 1,
        "progress": False,
    },
    "family": {
        "parameters": [1e-2, 5e-3, 2.5e-3],
        "delta_dup": 1e-8,
        "restart_times": [],
        "workers": 1,
    },
    "funnel": {
        "branch_times": [0.0, 0.25, 0.5, 0.75, 1.0],
        "t_end": 1.5,
        "dt": 0.05,
        "cells": 32,
        "E0": 1.0,
    },
    "schedule": {
        "rates": 8,
        "basis": 16,
        "stages": None,
        "eps_tie": 1e-9,
        "delta_dup": 1e-8,
        "energy_scale": None,
    },
    "verification": {
        "fixture": None,
        "continuity": 1e-6,
        "momentum": 1e-6,
        "energy": 1e-6,
        "suite_size": 8,
        "pairs": ["identity", "log", "rational"],
        "log_eps": 1e-6,
        "taus": None,
    },
    "semigroup": {
        "t1": [0.0, 0.25, 0.5],
        "t2": [0.25, 0.5],
        "tolerance": 1e-8,
        "eta": 1e-8,
    },
    "convergence": {
        "resolutions": [64, 128, 256],
        "dt_per_h": 0.5,
        "t_end": 0.125,
        "amplitude": 0.2,
        "profile": "manufactured",
        "source": "exact",
        "refine_dt": True,
        "min_order": 1.8,
        "floor": 1e-12,
    },
    "output": {"directory": "workspace/runs"},
    "seed": 0,
}


def _merge(defaults: dict, given: dict, path: str, errors: list[str]) -> dict:
    """Overlay `given` on `defaults`, reporting unknown keys by dotted path"""
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        dotted = f"{path}.{key}" if path else key
        if key not in defaults:
            errors.append(f"{dotted}: unknown key")
            continue
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                errors.append(f"{dotted}: expected a block (object)")
                continue
            out[key] = _merge(defaults[key], value, dotted, errors)
        else:
            out[key] = value
    return out


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class ExperimentConfig:
    """Resolved experiment configuration (JSON, key blocks)"""

    def __init__(self, config_path: Optional[str] = None, data: Optional[dict] = None):
        self._load_errors: list[str] = []
        self.data: dict = copy.deepcopy(DEFAULTS)
        self.data["metadata"]["created_at"] = datetime.now().isoformat()

        if config_path:
            self.load(config_path)
        elif data is not None:
            self.update(data)

    def load(self, config_path: str) -> None:
        """Load config from JSON file

        Unknown keys are recorded as validation errors.
        """
        with open(config_path, 'r') as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"{config_path} is not valid JSON: {e}")
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{config_path} must contain a JSON object")
        self.update(raw)

    def update(self, raw: dict) -> None:
        created = self.data["metadata"]["created_at"]
        self.data = _merge(self.data, raw, "", self._load_errors)
        if self.data["metadata"]["created_at"] is None:
            self.data["metadata"]["created_at"] = created

    def __getitem__(self, block: str) -> Any:
        return self.data[block]

    @property
    def system(self) -> str:
        return self.data["system"]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def validate(self, command: Optional[str] = None) -> tuple[bool, list[str], list[str]]:
        """Validate configuration

        Args:
            command: Also apply the checks of this subcommand

        Returns:
            (is_valid, error_messages, warning_messages)
        """
        errors = list(self._load_errors)
        warnings: list[str] = []
        d = self.data

        if d["system"] not in SYSTEMS:
            errors.append(f"system: must be one of {SYSTEMS}, got '{d['system']}'")
        if not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
            errors.append("seed: must be an integer")

        g = d["grid"]
        if not isinstance(g["extents"], list) or not isinstance(g["cells"], list):
            errors.append("grid.extents and grid.cells: must be lists")
        elif len(g["extents"]) != len(g["cells"]):
            errors.append("grid.cells: needs one entry per axis of grid.extents")
        else:
            expected = {"ns_1d": 1, "ns_2d": 2}.get(d["system"])
            if expected is not None and len(g["cells"]) != expected:
                errors.append(f"grid.cells: system {d['system']} needs {expected} axes")
            if any(not isinstance(c, int) or c < 4 for c in g["cells"]):
                errors.append("grid.cells: every axis needs an integer >= 4")
            if any(not _is_number(e) or e <= 0 for e in g["extents"]):
                errors.append("grid.extents: must be positive numbers")
        if g["boundary"] not in BOUNDARIES:
            errors.append(f"grid.boundary: must be one of {BOUNDARIES}")

        law = d["law"]
        if law["preset"] is not None and law["preset"] not in Catalog.LAW_PRESETS:
            errors.append(f"law.preset: unknown preset '{law['preset']}'")
        if law["kind"] not in LAW_KINDS:
            errors.append(f"law.kind: must be one of {LAW_KINDS}")
        if law["kind"] == "custom_tabulated" and law["preset"] is None \
                and law["table"] is None and law["table_file"] is None:
            errors.append("law.table: a tabulated law needs law.table or law.table_file")

        for key in ("mu", "bulk"):
            if not _is_number(d["viscosity"][key]):
                errors.append(f"viscosity.{key}: must be a number")
        if _is_number(d["viscosity"]["mu"]) and d["viscosity"]["mu"] <= 0:
            errors.append("viscosity.mu: must be positive")

        if d["initial_data"]["profile"] not in Catalog.PROFILES:
            errors.append(f"initial_data.profile: must be one of {Catalog.list_profiles()}")

        s = d["solver"]
        if s["scheme"] not in SCHEMES:
            errors.append(f"solver.scheme: must be one of {SCHEMES}")
        for key in ("dt", "t_end", "cfl"):
            if not _is_number(s[key]) or s[key] <= 0:
                errors.append(f"solver.{key}: must be a positive number")

        for block, keys in (
            ("schedule", ("eps_tie", "delta_dup")),
            ("verification", ("continuity", "momentum", "energy", "log_eps")),
            ("semigroup", ("tolerance", "eta")),
            ("family", ("delta_dup",)),
        ):
            for key in keys:
                value = d[block][key]
                if not _is_number(value) or value <= 0:
                    errors.append(f"{block}.{key}: tolerance must be positive")

        sched = d["schedule"]
        for key in ("rates", "basis"):
            if not isinstance(sched[key], int) or sched[key] < 1:
                errors.append(f"schedule.{key}: must be a positive integer")
        fixture = d["verification"]["fixture"]
        if fixture is not None and fixture not in FIXTURES:
            errors.append(f"verification.fixture: must be one of {FIXTURES}")
        for name in d["verification"]["pairs"]:
            if name not in Catalog.PAIRS:
                errors.append(f"verification.pairs: unknown pair '{name}'")

        f = d["funnel"]
        if any(not _is_number(c) or c < 0 or c >= f["t_end"] for c in f["branch_times"]):
            errors.append("funnel.branch_times: must lie in [0, funnel.t_end)")

        if command == "convergence":
            res = d["convergence"]["resolutions"]
            if not isinstance(res, list) or len(res) < 3:
                errors.append("convergence.resolutions: at least 3 resolutions are required")
            elif any(not isinstance(r, int) or r < 4 for r in res):
                errors.append("convergence.resolutions: must be integers >= 4")
            if d["convergence"]["profile"] not in ("manufactured", "equilibrium"):
                errors.append("convergence.profile: must be 'manufactured' or 'equilibrium'")
            if d["convergence"]["source"] not in ("exact", "solver"):
                errors.append("convergence.source: must be 'exact' or 'solver'")
            if not d["convergence"]["refine_dt"]:
                warnings.append("convergence.refine_dt is false: dt stays at the coarsest value")
        if command == "select" and d["system"] != "funnel" and len(d["family"]["parameters"]) < 1:
            errors.append("family.parameters: needs at least one value")
        if command == "semigroup" and d["system"] == "ns_2d":
            warnings.append("semigroup checks on ns_2d rerun the full family per pair and are slow")

        return (len(errors) == 0, errors, warnings)

    def require_valid(self, command: Optional[str] = None) -> list[str]:
        """Raise ConfigurationError listing every error; returns warnings"""
        ok, errors, warnings = self.validate(command)
        if not ok:
            raise ConfigurationError("; ".join(errors))
        return warnings

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        """Export to JSON-serializable dict"""
        return copy.deepcopy(self.data)

    def save(self, output_path: str) -> None:
        """Save resolved config to JSON file"""
        with open(output_path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def config_hash(self) -> str:
        """SHA-256 of the canonical resolved config (metadata and output location excluded)"""
        payload = {k: v for k, v in self.data.items() if k not in ("metadata", "output")}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def tolerances(self) -> dict:
        v, s, sg = self.data["verification"], self.data["schedule"], self.data["semigroup"]
        return {
            "continuity": v["continuity"],
            "momentum": v["momentum"],
            "energy": v["energy"],
            "eps_tie": s["eps_tie"],
            "delta_dup": s["delta_dup"],
            "semigroup": sg["tolerance"],
            "eta": sg["eta"],
            "family_delta_dup": self.data["family"]["delta_dup"],
        }

    # ------------------------------------------------------------------
    # Builders
    # ------------------------------------------------------------------

    def build_grid(self) -> Grid:
        if self.system == "funnel":
            return funnel_grid(int(self.data["funnel"]["cells"]))
        g = self.data["grid"]
        return Grid(tuple(g["extents"]), tuple(g["cells"]), g["boundary"])

    def build_law(self, dimension: Optional[int] = None) -> PressureLaw:
        law = self.data["law"]
        dimension = dimension or self.build_grid().dimension
        if law["preset"] is not None:
            return Catalog.law(law["preset"], dimension)
        params = {k: law[k] for k in ("a", "gamma", "a1", "a2", "b")}
        if law["kind"] == "custom_tabulated":
            if law["table_file"] is not None:
                rho, p = load_law_table(Path(law["table_file"]))
            else:
                table = np.asarray(law["table"], dtype=float)
                rho, p = table[:, 0], table[:, 1]
            result = PressureLaw(kind="custom_tabulated", table=(rho, p), dimension=dimension, **params)
        else:
            result = PressureLaw(kind=law["kind"], dimension=dimension, **params)
        ok, errors = result.validate()
        if not ok:
            raise ConfigurationError("; ".join(errors), "law")
        return result

    def build_viscosity(self) -> ViscosityPair:
        v = self.data["viscosity"]
        return ViscosityPair(float(v["mu"]), float(v["bulk"]))

    def build_initial_data(self, grid: Optional[Grid] = None, law: Optional[PressureLaw] = None) -> InitialData:
        grid = grid or self.build_grid()
        law = law or self.build_law(grid.dimension)
        params = dict(self.data["initial_data"])
        if params["velocity"] is None:
            params["velocity"] = [0.0] * grid.dimension
        rng = np.random.default_rng(self.seed)
        return Catalog.initial_data(params.pop("profile"), grid, law, params, rng, self.build_viscosity())

    def build_solver(self, grid: Optional[Grid] = None, law: Optional[PressureLaw] = None) -> SolverConfig:
        grid = grid or self.build_grid()
        s = self.data["solver"]
        return SolverConfig(
            grid=grid,
            dt=float(s["dt"]),
            t_end=float(s["t_end"]),
            law=law or self.build_law(grid.dimension),
            visc=self.build_viscosity(),
            scheme=s["scheme"],
            artificial_viscosity=float(s["artificial_viscosity"]),
            cfl=float(s["cfl"]),
            save_every=int(s["save_every"]),
            progress=bool(s["progress"]),
        )

    def build_thresholds(self) -> Thresholds:
        v = self.data["verification"]
        return Thresholds(float(v["continuity"]), float(v["momentum"]), float(v["energy"]))

    def build_family(self) -> FamilyConfig:
        f = self.data["family"]
        return FamilyConfig(
            parameters=[float(p) for p in f["parameters"]],
            delta_dup=float(f["delta_dup"]),
            restart_times=[float(t) for t in f["restart_times"]],
            workers=int(f["workers"]),
        )

    def build_system(self):
        """Candidate system (InitialData -> TrajectorySet) for the configured system"""
        if self.system == "funnel":
            f = self.data["funnel"]
            return FunnelSystem(f["branch_times"], float(f["t_end"]), float(f["dt"]), self.build_grid())
        return SolverSystem(self.build_family(), self.build_solver())

    def build_funnel_data(self) -> InitialData:
        """x0 = 0 funnel data with the configured E0"""
        grid = self.build_grid()
        return InitialData(ScalarField.constant(grid, 1.0), VectorField.zeros(grid), float(self.data["funnel"]["E0"]))

    def build_data(self) -> InitialData:
        if self.system == "funnel":
            return self.build_funnel_data()
        return self.build_initial_data()

    def build_schedule(self, E0: float) -> SelectionSchedule:
        s = self.data["schedule"]
        scale = s["energy_scale"] if s["energy_scale"] is not None else E0
        return SelectionSchedule.build(
            self.build_grid(), scale, rate_count=int(s["rates"]), basis_size=int(s["basis"]),
            stages=s["stages"], eps_tie=float(s["eps_tie"]), delta_dup=float(s["delta_dup"]),
        )

    def build_selector(self, E0: float) -> Selector:
        return Selector(self.build_schedule(E0))
