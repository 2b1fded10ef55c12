"""Bundle IO - Field files, trajectory bundles and tabulated-law CSV files

A field is a JSON manifest (grid, kind, shape, dtype, endianness) next to a
raw little-endian float64 file. A trajectory bundle is a directory with a
manifest.json (time grid, id, energy samples including E(0-)) and one field
pair per stored time in fields/.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ConfigurationError, ShapeError
from .state import Grid, InitialData, ScalarField, VectorField
from .trajectory import EnergySignal, Trajectory, TrajectorySet

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1.0"
DTYPE = "<f8"

Field = Union[ScalarField, VectorField]


def _jsonable(value):
    """json.dump default for numpy scalars and arrays"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")


def grid_from_dict(data: dict) -> Grid:
    return Grid(tuple(data["extents"]), tuple(data["cells"]), data["boundary"])


def save_field(field: Field, stem: Path, units: str = "") -> Path:
    """Write <stem>.json and <stem>.bin; returns the manifest path"""
    stem = Path(stem)
    kind = "vector" if isinstance(field, VectorField) else "scalar"
    raw = stem.with_suffix(".bin")
    np.ascontiguousarray(field.values, dtype=DTYPE).tofile(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "grid": field.grid.to_dict(),
        "shape": list(field.values.shape),
        "dtype": "float64",
        "endianness": "little",
        "units": units,
        "data_file": raw.name,
    }
    path = stem.with_suffix(".json")
    write_json(path, manifest)
    return path


def load_field(manifest_path: Path) -> Field:
    """Read a field written by save_field"""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    if manifest.get("endianness") != "little" or manifest.get("dtype") != "float64":
        raise ConfigurationError(f"{manifest_path.name}: only little-endian float64 fields are supported")
    grid = grid_from_dict(manifest["grid"])
    values = np.fromfile(manifest_path.parent / manifest["data_file"], dtype=DTYPE)
    shape = tuple(manifest["shape"])
    if values.size != int(np.prod(shape)):
        raise ShapeError(f"{manifest['data_file']} holds {values.size} values, manifest declares {shape}")
    values = values.reshape(shape)
    if manifest["kind"] == "vector":
        return VectorField(grid, values)
    return ScalarField(grid, values)


def save_trajectory(traj: Trajectory, directory: Path) -> Path:
    """Write a trajectory bundle; returns the manifest path"""
    directory = Path(directory)
    fields_dir = directory / "fields"
    fields_dir.mkdir(parents=True, exist_ok=True)
    for i in range(traj.steps + 1):
        save_field(ScalarField(traj.grid, traj.rho[i]), fields_dir / f"rho_{i:05d}", "density")
        save_field(VectorField(traj.grid, traj.m[i]), fields_dir / f"m_{i:05d}", "momentum")
    manifest = {
        "format_version": FORMAT_VERSION,
        "id": traj.id,
        "grid": traj.grid.to_dict(),
        "dt": traj.dt,
        "steps": traj.steps,
        "times": traj.times,
        "energy": {
            "initial_slot": traj.energy.initial_slot,
            "values": traj.energy.values,
            "left_values": traj.energy.left_values,
        },
        "continuity_constant": traj.continuity_constant,
        "metadata": traj.metadata,
    }
    path = directory / "manifest.json"
    write_json(path, manifest)
    logger.info(f"Saved trajectory bundle '{traj.id}' to {directory}")
    return path


def load_trajectory(directory: Path) -> Trajectory:
    """Read a trajectory bundle written by save_trajectory"""
    directory = Path(directory)
    with open(directory / "manifest.json") as f:
        manifest = json.load(f)
    grid = grid_from_dict(manifest["grid"])
    steps = int(manifest["steps"])
    rho = np.stack([load_field(directory / "fields" / f"rho_{i:05d}.json").values for i in range(steps + 1)])
    m = np.stack([load_field(directory / "fields" / f"m_{i:05d}.json").values for i in range(steps + 1)])
    energy = manifest["energy"]
    signal = EnergySignal(manifest["times"], energy["values"], energy["left_values"])
    return Trajectory(grid, float(manifest["dt"]), rho, m, signal, manifest["id"], manifest.get("metadata", {}))


def save_trajectory_set(members: TrajectorySet, directory: Path) -> Path:
    """Write every member as a bundle under <directory>/<id>/ plus a set manifest"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for q in members:
        save_trajectory(q, directory / q.id)
    save_field(members.data.rho0, directory / "rho0", "density")
    save_field(members.data.m0, directory / "m0", "momentum")
    path = directory / "set.json"
    write_json(path, {
        "format_version": FORMAT_VERSION,
        "E0": members.data.E0,
        "ids": members.ids,
        "metadata": members.metadata,
    })
    return path


def load_trajectory_set(directory: Path) -> TrajectorySet:
    directory = Path(directory)
    with open(directory / "set.json") as f:
        manifest = json.load(f)
    rho0 = load_field(directory / "rho0.json")
    m0 = load_field(directory / "m0.json")
    data = InitialData(rho0, m0, float(manifest["E0"]))
    members = TrajectorySet(data, [load_trajectory(directory / i) for i in manifest["ids"]])
    members.metadata.update(manifest.get("metadata", {}))
    return members


def load_law_table(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Two-column (rho, p) CSV; a non-numeric header row and '#' comments are skipped"""
    path = Path(path)
    rows = []
    with open(path, newline="") as f:
        for line_no, row in enumerate(csv.reader(f), 1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rho, p = (float(v) for v in row[:2])
            except ValueError:
                if not rows:
                    continue
                raise ConfigurationError(f"{path.name}:{line_no}: expected two numbers, got {row}", "law.table_file")
            rows.append((rho, p))
    if len(rows) < 3:
        raise ConfigurationError(f"{path.name}: a pressure table needs at least 3 rows", "law.table_file")
    table = np.array(rows)
    return table[:, 0], table[:, 1]


def write_table(path: Path, header: list[str], rows: list[list]) -> None:
    """CSV table with a header row"""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
