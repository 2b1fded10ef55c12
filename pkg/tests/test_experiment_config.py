"""Tests for config loading, validation, hashing and builders"""

import json
from pathlib import Path

import numpy as np
import pytest

from src.components.errors import ConfigurationError
from src.components.experiment_config import ExperimentConfig
from src.components.physics import TABULATED
from src.components.systems import FunnelSystem, SolverSystem

CONFIGS = Path(__file__).parent.parent / "workspace" / "configs"


def test_defaults_are_valid():
    ok, errors, _ = ExperimentConfig().validate()
    assert ok, errors


@pytest.mark.parametrize("name", ["funnel", "ns_1d", "ns_2d", "convergence", "equilibrium", "increasing_energy"])
def test_shipped_configs_are_valid(name):
    config = ExperimentConfig(str(CONFIGS / f"{name}.json"))
    ok, errors, _ = config.validate()
    assert ok, errors


def test_unknown_keys_are_reported_by_path():
    config = ExperimentConfig(data={"solver": {"dtt": 1e-3}, "colour": "red"})
    ok, errors, _ = config.validate()
    assert not ok
    assert "solver.dtt: unknown key" in errors
    assert "colour: unknown key" in errors


def test_block_must_be_an_object():
    ok, errors, _ = ExperimentConfig(data={"grid": 5}).validate()
    assert not ok and "grid: expected a block (object)" in errors


@pytest.mark.parametrize("data, fragment", [
    ({"system": "ns_3d"}, "system:"),
    ({"grid": {"cells": [2]}}, "grid.cells"),
    ({"system": "ns_2d"}, "needs 2 axes"),
    ({"viscosity": {"mu": 0.0}}, "viscosity.mu"),
    ({"schedule": {"eps_tie": 0}}, "schedule.eps_tie"),
    ({"verification": {"pairs": ["cubic"]}}, "verification.pairs"),
    ({"funnel": {"branch_times": [2.0]}}, "funnel.branch_times"),
    ({"law": {"kind": "custom_tabulated"}}, "law.table"),
    ({"seed": 1.5}, "seed"),
])
def test_invalid_values(data, fragment):
    ok, errors, _ = ExperimentConfig(data=data).validate()
    assert not ok
    assert any(fragment in e for e in errors)


def test_convergence_needs_three_resolutions():
    config = ExperimentConfig(data={"convergence": {"resolutions": [64, 128]}})
    assert config.validate()[0]
    ok, errors, _ = config.validate("convergence")
    assert not ok and any("at least 3" in e for e in errors)
    with pytest.raises(ConfigurationError):
        config.require_valid("convergence")


def test_hash_ignores_metadata():
    a = ExperimentConfig(data={"metadata": {"name": "a"}})
    b = ExperimentConfig(data={"metadata": {"name": "b"}})
    assert a.config_hash() == b.config_hash()
    assert ExperimentConfig(data={"output": {"directory": "elsewhere"}}).config_hash() == a.config_hash()
    c = ExperimentConfig(data={"seed": 7})
    assert c.config_hash() != a.config_hash()


def test_save_and_reload_keep_the_hash(tmp_path):
    config = ExperimentConfig(str(CONFIGS / "funnel.json"))
    path = tmp_path / "resolved.json"
    config.save(str(path))
    assert ExperimentConfig(str(path)).config_hash() == config.config_hash()


def test_invalid_json_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(str(path))
    path.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(str(path))


def test_tolerances_block():
    tolerances = ExperimentConfig().tolerances()
    assert tolerances["eps_tie"] == 1e-9 and tolerances["semigroup"] == 1e-8
    assert set(tolerances) >= {"continuity", "momentum", "energy", "delta_dup", "eta"}


def test_builders_for_the_funnel():
    config = ExperimentConfig(str(CONFIGS / "funnel.json"))
    grid = config.build_grid()
    assert grid.cells == (32,)
    assert isinstance(config.build_system(), FunnelSystem)
    data = config.build_data()
    assert data.E0 == 1.0 and np.all(data.m0.values == 0.0)
    schedule = config.build_schedule(data.E0)
    assert schedule.stages == 8 * 17
    assert schedule.energy_wrapper.scale == 1.0


def test_builders_for_the_solver():
    config = ExperimentConfig(str(CONFIGS / "ns_1d.json"))
    system = config.build_system()
    assert isinstance(system, SolverSystem)
    assert system.family.parameters == [1e-2, 5e-3, 2.5e-3]
    assert system.family.restart_times == [0.05]
    assert system.solver.steps == 100
    assert config.build_thresholds().momentum == 1e-6


def test_energy_scale_override():
    config = ExperimentConfig(data={"system": "funnel", "schedule": {"energy_scale": 50.0}})
    assert config.build_schedule(1.0).energy_wrapper.scale == 50.0


def test_seeded_noise_is_reproducible():
    data = {"initial_data": {"noise": 0.01}, "seed": 3}
    a = ExperimentConfig(data=data).build_initial_data()
    b = ExperimentConfig(data=data).build_initial_data()
    c = ExperimentConfig(data=dict(data, seed=4)).build_initial_data()
    assert np.array_equal(a.rho0.values, b.rho0.values)
    assert not np.array_equal(a.rho0.values, c.rho0.values)


def test_tabulated_law_from_file(tmp_path):
    table = tmp_path / "law.csv"
    table.write_text("rho,p\n" + "\n".join(f"{r / 10:.4f},{(r / 10) ** 2:.8f}" for r in range(31)) + "\n")
    config = ExperimentConfig(data={"law": {"kind": "custom_tabulated", "table_file": str(table)}})
    law = config.build_law()
    assert law.kind == TABULATED
    assert law.rho_max == pytest.approx(3.0)


def test_inline_table():
    rows = [[r / 10, (r / 10) ** 2] for r in range(31)]
    law = ExperimentConfig(data={"law": {"kind": "custom_tabulated", "table": rows}}).build_law()
    assert law.kind == TABULATED


def test_loaded_file_round_trips_values(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"system": "funnel", "funnel": {"dt": 0.025}}))
    config = ExperimentConfig(str(path))
    assert config.system == "funnel" and config["funnel"]["dt"] == 0.025
    assert config["funnel"]["t_end"] == 1.5
