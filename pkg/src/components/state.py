"""State - Grids, instantaneous fields, negative Sobolev norms and the data set D"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, ShapeError
from .physics import PressureLaw, total_energy

logger = logging.getLogger(__name__)

DIRICHLET = "dirichlet_noslip"
PERIODIC = "periodic"
BOUNDARIES = (DIRICHLET, PERIODIC)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on an interval, rectangle or torus

    Args:
        extents: Length of each axis
        cells: Number of cells per axis (>= 4)
        boundary: "dirichlet_noslip" or "periodic"
    """

    extents: tuple[float, ...]
    cells: tuple[int, ...]
    boundary: str = DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if len(self.extents) != len(self.cells) or self.dimension not in (1, 2):
            raise ConfigurationError("grid needs matching extents and cells for 1 or 2 axes", "grid")
        if any(c < 4 for c in self.cells):
            raise ConfigurationError(f"every axis needs at least 4 cells, got {self.cells}", "grid.cells")
        if any(e <= 0 for e in self.extents):
            raise ConfigurationError(f"extents must be positive, got {self.extents}", "grid.extents")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary '{self.boundary}'", "grid.boundary")

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates broadcast to the grid shape"""
        return tuple(np.meshgrid(*(self.centers(a) for a in range(self.dimension)), indexing="ij"))

    def integrate(self, values: np.ndarray) -> float:
        """Cell-centered quadrature over the spatial axes (leading axes only)"""
        values = np.asarray(values, dtype=float)
        return float(np.sum(values) * self.cell_volume)

    def integrate_batch(self, values: np.ndarray) -> np.ndarray:
        """Quadrature over the trailing spatial axes of a batched array"""
        axes = tuple(range(values.ndim - self.dimension, values.ndim))
        return np.sum(values, axis=axes) * self.cell_volume

    def to_dict(self) -> dict:
        return {"extents": list(self.extents), "cells": list(self.cells), "boundary": self.boundary}


def _readonly(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centered scalar samples (a density in most uses)"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        if values.shape != self.grid.shape:
            raise ShapeError(f"scalar field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def scale(self, factor: float) -> "ScalarField":
        return ScalarField(self.grid, factor * self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Cell-centered vector samples, components on the last axis"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        expected = self.grid.shape + (self.grid.dimension,)
        if values.shape != expected:
            raise ShapeError(f"vector field shape {values.shape} does not match {expected}")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.shape + (grid.dimension,)))

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_grid(self, other)
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_grid(self, other)
        return VectorField(self.grid, self.values - other.values)

    def scale(self, factor: float) -> "VectorField":
        return VectorField(self.grid, factor * self.values)


Field = Union[ScalarField, VectorField]


def _same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise ShapeError("fields live on different grids")


# ------------------------------------------------------------------
# Laplacian eigenbases
# ------------------------------------------------------------------

def _axis_modes(grid: Grid, axis: int, modes: int) -> list[tuple[float, np.ndarray]]:
    """First L2-orthonormal Laplacian eigenfunctions along one axis"""
    L = grid.extents[axis]
    x = grid.centers(axis)
    out = []
    if grid.boundary == DIRICHLET:
        for k in range(1, modes + 1):
            out.append(((k * math.pi / L) ** 2, math.sqrt(2.0 / L) * np.sin(k * math.pi * x / L)))
    else:
        out.append((0.0, np.full_like(x, 1.0 / math.sqrt(L))))
        k = 1
        while len(out) < modes:
            lam = (2.0 * k * math.pi / L) ** 2
            out.append((lam, math.sqrt(2.0 / L) * np.cos(2.0 * k * math.pi * x / L)))
            if len(out) < modes:
                out.append((lam, math.sqrt(2.0 / L) * np.sin(2.0 * k * math.pi * x / L)))
            k += 1
    return out


@lru_cache(maxsize=64)
def eigenbasis(grid: Grid, modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Boundary-matching Laplacian eigenbasis truncated at `modes` per axis

    Sine basis for no-slip grids, real Fourier basis for periodic grids;
    2D bases are tensor products.

    Returns:
        (eigenvalues shape (J,), functions shape (J, *grid.shape))
    """
    if modes < 1 or any(modes > c // 2 for c in grid.cells):
        raise ConfigurationError(
            f"{modes} modes per axis need at least {2 * modes} cells per axis, grid has {grid.cells}",
            "modes",
        )
    per_axis = [_axis_modes(grid, a, modes) for a in range(grid.dimension)]
    if grid.dimension == 1:
        lams = np.array([lam for lam, _ in per_axis[0]])
        funcs = np.stack([f for _, f in per_axis[0]])
    else:
        lams_list, funcs_list = [], []
        for lx, fx in per_axis[0]:
            for ly, fy in per_axis[1]:
                lams_list.append(lx + ly)
                funcs_list.append(np.outer(fx, fy))
        order = np.argsort(lams_list, kind="stable")
        lams = np.array(lams_list)[order]
        funcs = np.stack(funcs_list)[order]
    lams.setflags(write=False)
    funcs.setflags(write=False)
    return lams, funcs


def vector_basis(grid: Grid, count: int) -> np.ndarray:
    """First `count` vector-valued basis functions (component-major interleave)

    Returns:
        Array of shape (count, *grid.shape, N)
    """
    N = grid.dimension
    modes = 1
    while modes * N * (modes ** (N - 1)) < count and 2 * (modes + 1) <= min(grid.cells):
        modes += 1
    _, funcs = eigenbasis(grid, modes)
    out = []
    for f in funcs:
        for comp in range(N):
            v = np.zeros(grid.shape + (N,))
            v[..., comp] = f
            out.append(v)
            if len(out) == count:
                return np.stack(out)
    raise ConfigurationError(f"grid {grid.cells} cannot host {count} vector basis functions", "schedule.modes")


# ------------------------------------------------------------------
# Negative Sobolev norms
# ------------------------------------------------------------------

@dataclass(frozen=True)
class NegNormConfig:
    """Order ell and per-axis mode count J of the spectral W^{-ell,2} norm"""

    ell: int = 2
    modes: int = 8

    def __post_init__(self):
        if self.modes < 1:
            raise ConfigurationError(f"modes must be >= 1, got {self.modes}", "schedule.norm_modes")

    def validate(self, dimension: int) -> tuple[bool, list[str]]:
        errors = []
        if not self.ell > dimension / 2 + 1:
            errors.append(f"ell={self.ell} must exceed N/2 + 1 = {dimension / 2 + 1}")
        return (len(errors) == 0, errors)

    @classmethod
    def default_for(cls, grid: Grid) -> "NegNormConfig":
        ell = 2 if grid.dimension == 1 else 3
        return cls(ell=ell, modes=min(8, min(grid.cells) // 2))


def neg_sobolev_weights(grid: Grid, cfg: NegNormConfig) -> tuple[np.ndarray, np.ndarray]:
    """(1 + Lambda_j)^(-ell) weights and the eigenfunctions they belong to"""
    lams, funcs = eigenbasis(grid, cfg.modes)
    return (1.0 + lams) ** (-float(cfg.ell)), funcs


def neg_sobolev_norm_batch(values: np.ndarray, grid: Grid, cfg: NegNormConfig) -> np.ndarray:
    """Norms of a batch of scalar (…, *shape) or vector (…, *shape, N) samples

    `values` has leading batch axes; a trailing component axis is detected by
    comparing with the grid shape.
    """
    weights, funcs = neg_sobolev_weights(grid, cfg)
    values = np.asarray(values, dtype=float)
    nd = grid.dimension
    is_vector = values.ndim > nd and values.shape[-1] == nd and values.shape[-nd - 1:-1] == grid.shape
    if is_vector:
        comps = np.moveaxis(values, -1, 0)  # (N, ..., *shape)
    else:
        if values.shape[values.ndim - nd:] != grid.shape:
            raise ShapeError(f"samples of shape {values.shape} do not match grid {grid.shape}")
        comps = values[None]
    flat = comps.reshape(comps.shape[: comps.ndim - nd] + (-1,))
    coeffs = flat @ funcs.reshape(len(funcs), -1).T * grid.cell_volume
    total = np.sum(weights * coeffs**2, axis=-1)
    return np.sqrt(np.sum(total, axis=0))


def neg_sobolev_norm(field: Field, cfg: NegNormConfig) -> float:
    """Spectral W^{-ell,2} norm (sum_j (1+Lambda_j)^(-ell) |c_j|^2)^(1/2)

    Coefficients c_j are cell-centered quadratures against the
    boundary-matching eigenbasis; vector fields sum over components.
    """
    return float(neg_sobolev_norm_batch(field.values, field.grid, cfg))


# ------------------------------------------------------------------
# Finite differences
# ------------------------------------------------------------------

def pad_with_ghosts(values: np.ndarray, grid: Grid, axis: int, odd: bool, width: int = 1) -> np.ndarray:
    """Pad one spatial axis with ghost cells

    Periodic grids wrap; no-slip grids reflect, negating the ghosts of odd
    quantities (velocity, momentum) and copying those of even ones (density).
    """
    pad = [(0, 0)] * values.ndim
    pad[axis] = (width, width)
    if grid.boundary == PERIODIC:
        return np.pad(values, pad, mode="wrap")
    padded = np.pad(values, pad, mode="symmetric")
    if odd:
        idx_lo = [slice(None)] * values.ndim
        idx_hi = [slice(None)] * values.ndim
        idx_lo[axis] = slice(0, width)
        idx_hi[axis] = slice(-width, None)
        padded[tuple(idx_lo)] *= -1.0
        padded[tuple(idx_hi)] *= -1.0
    return padded


def centered_difference(values: np.ndarray, grid: Grid, axis: int, odd: bool, spatial_offset: int = 0) -> np.ndarray:
    """Second-order centered derivative along a spatial axis

    `spatial_offset` is the index of the first spatial axis in `values`.
    """
    ax = spatial_offset + axis
    padded = pad_with_ghosts(values, grid, ax, odd)
    hi = [slice(None)] * values.ndim
    lo = [slice(None)] * values.ndim
    hi[ax] = slice(2, None)
    lo[ax] = slice(0, -2)
    return (padded[tuple(hi)] - padded[tuple(lo)]) / (2.0 * grid.spacing[axis])


def velocity_gradient(u: np.ndarray, grid: Grid, spatial_offset: int = 0) -> np.ndarray:
    """grad u with [..., i, j] = d_j u_i by centered differences with no-slip/periodic ghosts"""
    N = grid.dimension
    cols = [centered_difference(u, grid, j, odd=True, spatial_offset=spatial_offset) for j in range(N)]
    return np.stack(cols, axis=-1)


# ------------------------------------------------------------------
# Initial data and the set D
# ------------------------------------------------------------------

@dataclass(frozen=True)
class InitialData:
    """Initial density, momentum and energy [rho0, m0, E0]"""

    rho0: ScalarField
    m0: VectorField
    E0: float

    def __post_init__(self):
        if self.rho0.grid != self.m0.grid:
            raise ShapeError("initial density and momentum live on different grids")

    @property
    def grid(self) -> Grid:
        return self.rho0.grid


@dataclass(frozen=True)
class Membership:
    """Outcome of a D-membership test"""

    member: bool
    margin: float
    energy: float
    diagnostic: Optional[str] = None

    def __bool__(self) -> bool:
        return self.member

    def to_dict(self) -> dict:
        return {"member": self.member, "margin": self.margin, "energy": self.energy, "diagnostic": self.diagnostic}


def in_data_set_D(data: InitialData, law: PressureLaw) -> Membership:
    """True iff rho0 >= 0 and total_energy(rho0, m0) <= E0; margin = E0 - total_energy"""
    if not data.rho0.is_nonnegative():
        cell = tuple(int(i) for i in np.unravel_index(np.argmin(data.rho0.values), data.grid.shape))
        return Membership(False, -math.inf, math.nan, f"negative density at cell {cell}")
    energy = total_energy(data.rho0, data.m0, law)
    if math.isinf(energy):
        return Membership(False, -math.inf, energy, "momentum on vacuum cells gives infinite kinetic energy")
    margin = data.E0 - energy
    member = margin >= -1e-12 * max(1.0, abs(data.E0))
    diagnostic = None if member else f"energy {energy:.6g} exceeds E0 = {data.E0:.6g}"
    return Membership(member, margin, energy, diagnostic)
