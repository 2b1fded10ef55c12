"""Verify Command - Weak-form and energy checks on generated, loaded or fixture trajectories"""

import argparse
import logging
from pathlib import Path

import numpy as np

from src.components.bundle_io import load_trajectory, load_trajectory_set, save_trajectory
from src.components.catalog import Catalog
from src.components.experiment_config import ExperimentConfig
from src.components.physics import total_energy
from src.components.run_recorder import RunRecorder
from src.components.state import InitialData, ScalarField, VectorField, in_data_set_D
from src.components.systems import funnel_ode_residual
from src.components.trajectory import EnergySignal, Trajectory
from src.components.weakform import (
    CheckResult,
    VerificationReport,
    bv_monotone_check,
    initial_energy_check,
    verify_trajectory,
)

logger = logging.getLogger(__name__)

FUNNEL_ODE_TOLERANCE = 1e-8


def build_fixture(name: str, config: ExperimentConfig) -> Trajectory:
    """Stationary fluid at rest; 'increasing_energy' carries a growing energy signal"""
    grid = config.build_grid()
    law = config.build_law(grid.dimension)
    rho0 = ScalarField.constant(grid, 1.0)
    m0 = VectorField.zeros(grid)
    data = InitialData(rho0, m0, total_energy(rho0, m0, law))
    dt = float(config["solver"]["dt"])
    steps = max(1, int(round(float(config["solver"]["t_end"]) / dt)))
    traj = Trajectory.constant(data, dt, steps, f"fixture-{name}")
    if name == "equilibrium":
        return traj
    growth = data.E0 + 0.1 * traj.times
    return Trajectory(grid, dt, traj.rho, traj.m, EnergySignal(traj.times, growth), traj.id,
                      {"generator": "fixture"})


def _funnel_report(traj: Trajectory) -> VerificationReport:
    report = VerificationReport(traj.id)
    monotone = bv_monotone_check(traj.energy)
    report.checks.append(CheckResult("bv_monotone", 0.0 if monotone else 1.0, 0.0, monotone))
    initial = initial_energy_check(traj.energy)
    report.checks.append(CheckResult("initial_energy", initial, 0.0, initial <= 1e-12))
    residual = funnel_ode_residual(traj)
    report.checks.append(CheckResult("funnel_ode", residual, FUNNEL_ODE_TOLERANCE, residual <= FUNNEL_ODE_TOLERANCE))
    return report


def _trajectories(config: ExperimentConfig, args: argparse.Namespace) -> tuple[list[Trajectory], dict]:
    """Bundle from --bundle, else the configured fixture, else a fresh candidate family"""
    bundle = getattr(args, "bundle", None)
    if bundle:
        path = Path(bundle)
        if (path / "set.json").exists():
            members = load_trajectory_set(path)
            return list(members), {"source": "bundle", "family": members.metadata}
        return [load_trajectory(path)], {"source": "bundle"}

    fixture = config["verification"]["fixture"]
    if fixture is not None:
        return [build_fixture(fixture, config)], {"source": f"fixture:{fixture}"}

    data = config.build_data()
    extra = {"source": "generated"}
    if config.system != "funnel":
        extra["initial_membership"] = in_data_set_D(data, config.build_law()).to_dict()
    members = config.build_system()(data)
    extra["family"] = members.metadata
    return list(members), extra


def run(config: ExperimentConfig, args: argparse.Namespace, recorder: RunRecorder) -> int:
    """Run every check; exit code 0 if all trajectories pass, 1 otherwise"""
    trajectories, extra = _trajectories(config, args)
    law = config.build_law()
    visc = config.build_viscosity()
    v = config["verification"]
    pairs = [Catalog.pair(name, float(v["log_eps"])) for name in v["pairs"]]
    funnel = config.system == "funnel" and extra["source"] == "generated"

    reports = []
    for i, traj in enumerate(trajectories):
        recorder.update_progress("verify", i, len(trajectories))
        if funnel:
            report = _funnel_report(traj)
        else:
            report = verify_trajectory(traj, law, visc, config.build_thresholds(), pairs,
                                       suite_size=int(v["suite_size"]), taus=v["taus"])
        reports.append(report)
        logger.info(f"{traj.id}: {'PASS' if report.passed else 'FAIL'}")
    recorder.update_progress("verify", len(trajectories), len(trajectories))

    if getattr(args, "save_bundles", False):
        for traj in trajectories:
            save_trajectory(traj, recorder.path("bundles") / traj.id)

    passed = all(r.passed for r in reports)
    summary = {
        "system": config.system,
        "passed": passed,
        "trajectories": [r.to_dict() for r in reports],
        "energy_ranges": {t.id: [float(np.min(t.energy.values)), float(np.max(t.energy.values))]
                          for t in trajectories},
        **extra,
    }
    recorder.write_report(summary, config.tolerances())
    return 0 if passed else 1
