"""Convergence Command - Weak-form residuals under grid refinement with fitted orders"""

import argparse
import logging
import math
from dataclasses import replace
from typing import Optional

import numpy as np

from src.components.bundle_io import write_table
from src.components.experiment_config import ExperimentConfig
from src.components.manufactured import ManufacturedSolution
from src.components.physics import total_energy
from src.components.run_recorder import RunRecorder
from src.components.state import InitialData, ScalarField, VectorField
from src.components.systems import ns_solve
from src.components.trajectory import Trajectory
from src.components.weakform import TestFunctionSuite, continuity_residual, identity_pair, momentum_residual

logger = logging.getLogger(__name__)

COLUMNS = ("continuity", "momentum")


def _run_one(config: ExperimentConfig, cells: int, dt: float):
    """Trajectory and forcing at one resolution"""
    c = config["convergence"]
    law = config.build_law(1)
    visc = config.build_viscosity()
    grid = ManufacturedSolution.grid(cells)

    if c["profile"] == "equilibrium":
        rho0 = ScalarField.constant(grid, 1.0)
        m0 = VectorField.zeros(grid)
        data = InitialData(rho0, m0, total_energy(rho0, m0, law))
        steps = int(round(float(c["t_end"]) / dt))
        return Trajectory.constant(data, dt, steps, f"equilibrium-{cells}"), None

    solution = ManufacturedSolution(float(c["amplitude"]), law, visc)
    if c["source"] == "exact":
        return solution.trajectory(cells, dt, float(c["t_end"])), solution.forcing
    solver = replace(config.build_solver(grid, law), dt=dt, t_end=float(c["t_end"]),
                     forcing=solution.forcing, progress=False)
    return ns_solve(solution.initial_data(grid), solver, f"manufactured-solver-{cells}"), solution.forcing


def fitted_order(h: list[float], residuals: list[float], floor: float) -> Optional[float]:
    """Least-squares slope of log(residual) against log(h); None when any residual is at the floor"""
    if any(r <= floor for r in residuals):
        return None
    slope, _ = np.polyfit(np.log(h), np.log(residuals), 1)
    return float(slope)


def _pairwise(h: list[float], residuals: list[float], floor: float) -> list[Optional[float]]:
    orders: list[Optional[float]] = [None]
    for i in range(1, len(h)):
        a, b = residuals[i - 1], residuals[i]
        orders.append(None if min(a, b) <= floor else math.log(a / b) / math.log(h[i - 1] / h[i]))
    return orders


def refinement_table(config: ExperimentConfig, recorder: Optional[RunRecorder] = None) -> dict:
    """Residuals at every configured resolution plus pairwise and fitted orders"""
    c = config["convergence"]
    law = config.build_law(1)
    visc = config.build_viscosity()
    resolutions = list(c["resolutions"])
    coarse_h = 1.0 / resolutions[0]
    suite_size = int(config["verification"]["suite_size"])

    rows = []
    for i, cells in enumerate(resolutions):
        if recorder is not None:
            recorder.update_progress("resolutions", i, len(resolutions))
        h = 1.0 / cells
        dt = float(c["dt_per_h"]) * (h if c["refine_dt"] else coarse_h)
        traj, forcing = _run_one(config, cells, dt)
        suite = TestFunctionSuite(traj.grid, traj.t_end, suite_size)
        row = {
            "cells": cells,
            "h": h,
            "dt": dt,
            "continuity": continuity_residual(traj, identity_pair(), suite, traj.t_end),
            "momentum": momentum_residual(traj, law, visc, suite, traj.t_end, forcing),
        }
        logger.info(f"{cells} cells: continuity {row['continuity']:.3e}, momentum {row['momentum']:.3e}")
        rows.append(row)

    floor = float(c["floor"])
    hs = [r["h"] for r in rows]
    fitted = {}
    for name in COLUMNS:
        values = [r[name] for r in rows]
        fitted[name] = fitted_order(hs, values, floor)
        for row, order in zip(rows, _pairwise(hs, values, floor)):
            row[f"{name}_order"] = order
    return {"rows": rows, "fitted_orders": fitted}


def run(config: ExperimentConfig, args: argparse.Namespace, recorder: RunRecorder) -> int:
    """Exit code 1 if a fitted order falls below convergence.min_order"""
    table = refinement_table(config, recorder)
    rows, fitted = table["rows"], table["fitted_orders"]
    recorder.update_progress("resolutions", len(rows), len(rows))

    def fmt(value):
        return "n/a" if value is None else f"{value:.6e}"

    header = ["cells", "h", "dt"] + [f"{n}{s}" for n in COLUMNS for s in ("", "_order")]
    body = [[r["cells"], fmt(r["h"]), fmt(r["dt"])] + [fmt(r[f"{n}{s}"]) for n in COLUMNS for s in ("", "_order")]
            for r in rows]
    body.append(["fitted", "", ""] + [v for n in COLUMNS for v in ("", fmt(fitted[n]))])
    write_table(recorder.path("convergence.csv"), header, body)

    min_order = float(config["convergence"]["min_order"])
    below = [n for n, order in fitted.items() if order is not None and order < min_order]
    if below:
        logger.warning(f"Fitted order below {min_order} for: {', '.join(below)}")
    passed = not below
    recorder.write_report({"passed": passed, **table}, config.tolerances())
    return 0 if passed else 1
