"""Tests for field files, trajectory bundles and law tables"""

import csv
import json

import numpy as np
import pytest

from src.components.bundle_io import (
    load_field,
    load_law_table,
    load_trajectory,
    load_trajectory_set,
    save_field,
    save_trajectory,
    save_trajectory_set,
    write_json,
    write_table,
)
from src.components.errors import ConfigurationError, ShapeError
from src.components.state import Grid, ScalarField, VectorField
from src.components.systems import toy_funnel_solutions
from src.components.trajectory import q_distance


def test_field_files(tmp_path, grid2d, rng):
    field = VectorField(grid2d, rng.normal(size=(16, 16, 2)))
    manifest = save_field(field, tmp_path / "m", "momentum")
    assert manifest.name == "m.json" and (tmp_path / "m.bin").stat().st_size == 16 * 16 * 2 * 8
    loaded = load_field(manifest)
    assert isinstance(loaded, VectorField)
    assert loaded.grid == grid2d
    assert np.array_equal(loaded.values, field.values)
    info = json.loads(manifest.read_text())
    assert info["endianness"] == "little" and info["units"] == "momentum"


def test_field_manifest_checks(tmp_path, grid1d):
    manifest = save_field(ScalarField.constant(grid1d, 2.0), tmp_path / "rho")
    info = json.loads(manifest.read_text())
    info["shape"] = [33]
    manifest.write_text(json.dumps(info))
    with pytest.raises(ShapeError):
        load_field(manifest)
    info["endianness"] = "big"
    manifest.write_text(json.dumps(info))
    with pytest.raises(ConfigurationError):
        load_field(manifest)


def test_trajectory_bundle(tmp_path):
    q = toy_funnel_solutions([0.0], 0.5, 0.05)[1]
    save_trajectory(q, tmp_path / "bundle")
    assert (tmp_path / "bundle" / "fields" / "rho_00010.json").exists()
    loaded = load_trajectory(tmp_path / "bundle")
    assert loaded.id == q.id and loaded.metadata["branch_time"] == 0.0
    assert q_distance(loaded, q) == 0.0
    assert np.array_equal(loaded.energy.left_values, q.energy.left_values)
    manifest = json.loads((tmp_path / "bundle" / "manifest.json").read_text())
    assert manifest["energy"]["initial_slot"] == 1.0


def test_trajectory_set_bundle(tmp_path):
    members = toy_funnel_solutions([0.0, 0.25], 0.5, 0.05)
    members.metadata["note"] = "funnel"
    save_trajectory_set(members, tmp_path / "set")
    loaded = load_trajectory_set(tmp_path / "set")
    assert loaded.ids == members.ids
    assert loaded.data.E0 == members.data.E0
    assert loaded.metadata["note"] == "funnel"


def test_law_table(tmp_path):
    path = tmp_path / "law.csv"
    path.write_text("# p = rho^2\nrho,p\n0,0\n1,1\n2,4\n")
    rho, p = load_law_table(path)
    assert list(rho) == [0.0, 1.0, 2.0] and list(p) == [0.0, 1.0, 4.0]


def test_law_table_errors(tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("0,0\n1,1\n")
    with pytest.raises(ConfigurationError):
        load_law_table(short)
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0\n1,one\n2,4\n3,9\n")
    with pytest.raises(ConfigurationError) as info:
        load_law_table(bad)
    assert "bad.csv:2" in str(info.value)


def test_write_table_and_json(tmp_path):
    write_table(tmp_path / "t.csv", ["cells", "h"], [[64, "1.5e-02"], ["fitted", ""]])
    with open(tmp_path / "t.csv", newline="") as f:
        assert list(csv.reader(f)) == [["cells", "h"], ["64", "1.5e-02"], ["fitted", ""]]
    write_json(tmp_path / "r.json", {"b": np.float64(1.5), "a": np.arange(3)})
    text = (tmp_path / "r.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5}


def test_grid_round_trips_through_manifest(tmp_path):
    grid = Grid((2.0,), (8,), "periodic")
    loaded = load_field(save_field(ScalarField.constant(grid, 1.0), tmp_path / "f"))
    assert loaded.grid == grid
