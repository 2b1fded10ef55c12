"""Trajectory - Trajectory space Q, energy signals, shift/continuation and metrics"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import (
    ContinuationError,
    DomainError,
    EmptySetError,
    InitialDataMismatchError,
    MonotonicityError,
    ShapeError,
    TimeGridError,
)
from .state import Grid, InitialData, NegNormConfig, ScalarField, VectorField, neg_sobolev_norm_batch

logger = logging.getLogger(__name__)

TIME_TOL = 1e-9
ENERGY_TOL = 1e-12


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EnergySignal:
    """Energy sampled on a uniform time grid with both one-sided limits

    Args:
        times: Strictly increasing sample times t_0 = 0 < t_1 < ...
        values: Right limits E(t_i+)
        left_values: Left limits E(t_i-); left_values[0] is the initial slot
            E(0-). Defaults to a pure step signal with E(0-) = E(0+).
    """

    times: np.ndarray
    values: np.ndarray
    left_values: Optional[np.ndarray] = None

    def __post_init__(self):
        times = _frozen(self.times)
        values = _frozen(self.values)
        if times.ndim != 1 or times.shape != values.shape or len(times) < 1:
            raise ShapeError("energy times and values must be 1D arrays of equal length")
        if np.any(np.diff(times) <= 0):
            raise DomainError("energy sample times must be strictly increasing")
        if self.left_values is None:
            left = np.concatenate([values[:1], values[:-1]])
        else:
            left = np.array(self.left_values, dtype=float)
            if left.shape != values.shape:
                raise ShapeError("left limits must match the right limits in length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left_values", _frozen(left))

    @classmethod
    def step(cls, times, values, initial_slot: Optional[float] = None) -> "EnergySignal":
        """Right-continuous step signal with an explicit E(0-)"""
        values = np.asarray(values, dtype=float)
        first = values[0] if initial_slot is None else float(initial_slot)
        left = np.concatenate([[first], values[:-1]])
        return cls(times, values, left)

    @property
    def initial_slot(self) -> float:
        return float(self.left_values[0])

    def __len__(self) -> int:
        return len(self.times)

    def right(self, index: int) -> float:
        return float(self.values[index])

    def left(self, index: int) -> float:
        return float(self.left_values[index])

    def jumps(self) -> np.ndarray:
        """E(t_i-) - E(t_i+) at each sample time"""
        return self.left_values - self.values

    def is_nonincreasing(self, tol: float = ENERGY_TOL) -> bool:
        scale = tol * max(1.0, float(np.max(np.abs(self.left_values))))
        if np.any(self.values - self.left_values > scale):
            return False
        return bool(np.all(self.left_values[1:] - self.values[:-1] <= scale))

    def l1_distance(self, other: "EnergySignal", horizon: float) -> float:
        """L1 distance of the right-continuous step representations on [0, horizon]"""
        n = min(len(self), len(other))
        t = self.times[:n]
        upper = np.minimum(np.append(t[1:], horizon), horizon)
        widths = np.clip(upper - t, 0.0, None)
        return float(np.sum(np.abs(self.values[:n] - other.values[:n]) * widths))


@dataclass(frozen=True)
class State:
    """Fields and one-sided energies at one grid time"""

    rho: ScalarField
    m: VectorField
    E_minus: float
    E_plus: float

    def as_initial_data(self, use_left: bool = True) -> InitialData:
        return InitialData(self.rho, self.m, self.E_minus if use_left else self.E_plus)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Element of Q sampled on a uniform time grid

    Args:
        grid: Spatial grid
        dt: Time step of the stored samples
        rho: Densities, shape (n+1, *grid.shape)
        m: Momenta, shape (n+1, *grid.shape, N)
        energy: Energy signal on the same time grid
        id: Stable identifier used for tie-breaking
        metadata: Free-form provenance (generator parameters, raw energy, ...)
    """

    grid: Grid
    dt: float
    rho: np.ndarray
    m: np.ndarray
    energy: EnergySignal
    id: str
    metadata: dict = field(default_factory=dict)
    continuity_constant: float = field(default=math.nan, init=False)

    def __post_init__(self):
        rho = _frozen(self.rho)
        m = _frozen(self.m)
        if self.dt <= 0:
            raise DomainError(f"time step must be positive, got {self.dt}")
        steps = rho.shape[0]
        if rho.shape[1:] != self.grid.shape:
            raise ShapeError(f"density samples {rho.shape[1:]} do not match grid {self.grid.shape}")
        if m.shape != (steps,) + self.grid.shape + (self.grid.dimension,):
            raise ShapeError(f"momentum samples have shape {m.shape}, expected {(steps,) + self.grid.shape}")
        if len(self.energy) != steps:
            raise ShapeError(f"energy has {len(self.energy)} samples, fields have {steps}")
        if not np.allclose(self.energy.times, self.dt * np.arange(steps), rtol=0, atol=TIME_TOL * self.dt):
            raise ShapeError("energy sample times do not match the uniform time grid")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "continuity_constant", self._continuity_constant())

    def _continuity_constant(self) -> float:
        if self.steps == 0:
            return 0.0
        cfg = NegNormConfig.default_for(self.grid)
        d_rho = neg_sobolev_norm_batch(np.diff(self.rho, axis=0), self.grid, cfg)
        d_m = neg_sobolev_norm_batch(np.diff(self.m, axis=0), self.grid, cfg)
        return float(max(np.max(d_rho), np.max(d_m)) / self.dt)

    @classmethod
    def constant(cls, data: InitialData, dt: float, steps: int, id: str,
                 energy: Optional[float] = None) -> "Trajectory":
        """Stationary trajectory holding `data` (energy defaults to E0)"""
        e = data.E0 if energy is None else energy
        times = dt * np.arange(steps + 1)
        rho = np.broadcast_to(data.rho0.values, (steps + 1,) + data.grid.shape)
        m = np.broadcast_to(data.m0.values, (steps + 1,) + data.m0.values.shape)
        signal = EnergySignal.step(times, np.full(steps + 1, e), initial_slot=data.E0)
        return cls(data.grid, dt, rho, m, signal, id)

    @property
    def steps(self) -> int:
        return self.rho.shape[0] - 1

    @property
    def t_end(self) -> float:
        return self.steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.energy.times

    def time_index(self, t: float) -> int:
        """Index of grid time t; raises TimeGridError off the grid"""
        k = int(round(t / self.dt))
        if 0 <= k <= self.steps and abs(t - k * self.dt) <= TIME_TOL * self.dt:
            return k
        k = min(max(k, 0), self.steps)
        nearest = sorted({self.times[j] for j in (k - 1, k, k + 1) if 0 <= j <= self.steps})
        raise TimeGridError(t, nearest)

    def evaluate(self, t: float) -> State:
        k = self.time_index(t)
        return State(
            ScalarField(self.grid, self.rho[k]),
            VectorField(self.grid, self.m[k]),
            self.energy.left(k),
            self.energy.right(k),
        )

    def initial_data(self) -> InitialData:
        return self.evaluate(0.0).as_initial_data()

    def with_id(self, new_id: str) -> "Trajectory":
        return Trajectory(self.grid, self.dt, self.rho, self.m, self.energy, new_id, dict(self.metadata))


def shift(traj: Trajectory, T: float, energy_slot: Optional[float] = None) -> Trajectory:
    """Positive shift: result(t) = traj(T + t) on [0, T_end - T]

    The initial slot of the shifted energy is traj.E(T-) unless `energy_slot`
    picks another value no smaller than E(T+).
    """
    k = traj.time_index(T)
    if k >= traj.steps and traj.steps > 0:
        raise TimeGridError(T, [traj.times[-2]] if traj.steps else [0.0])
    e = traj.energy
    slot = e.left(k) if energy_slot is None else float(energy_slot)
    scale = ENERGY_TOL * max(1.0, abs(slot))
    if slot < e.right(k) - scale:
        raise MonotonicityError(f"energy slot {slot:.6g} lies below E(T+) = {e.right(k):.6g}")
    times = traj.dt * np.arange(traj.steps - k + 1)
    left = np.concatenate([[slot], e.left_values[k + 1:]])
    signal = EnergySignal(times, e.values[k:], left)
    metadata = dict(traj.metadata, shifted_by=float(traj.dt * k) + float(traj.metadata.get("shifted_by", 0.0)))
    return Trajectory(traj.grid, traj.dt, traj.rho[k:], traj.m[k:], signal, traj.id, metadata)


def _check_compatible(q1: Trajectory, q2: Trajectory) -> None:
    if q1.grid != q2.grid:
        raise ShapeError("trajectories live on different grids")
    if abs(q1.dt - q2.dt) > 1e-12 * q1.dt:
        raise ShapeError(f"trajectories use different time steps ({q1.dt} vs {q2.dt})")


def continue_at(q1: Trajectory, q2: Trajectory, T: float, tol: float = 1e-10,
                cfg: Optional[NegNormConfig] = None) -> Trajectory:
    """Continuation q1 on [0, T] followed by q2(t - T)

    Raises:
        ContinuationError: q2 does not start from q1's fields at T
        MonotonicityError: q2.E(0-) exceeds q1.E(T-)
    """
    _check_compatible(q1, q2)
    k = q1.time_index(T)
    cfg = cfg or NegNormConfig.default_for(q1.grid)
    gap = float(
        neg_sobolev_norm_batch(q2.rho[0] - q1.rho[k], q1.grid, cfg)
        + neg_sobolev_norm_batch(q2.m[0] - q1.m[k], q1.grid, cfg)
    )
    if gap > tol:
        raise ContinuationError(f"fields of '{q2.id}' at 0 differ from '{q1.id}' at T={T:g}", gap)
    e1, e2 = q1.energy, q2.energy
    if e2.initial_slot > e1.left(k) + ENERGY_TOL * max(1.0, abs(e1.left(k))):
        raise MonotonicityError(
            f"continuation raises the energy at T={T:g}: E2(0-)={e2.initial_slot:.6g} > E1(T-)={e1.left(k):.6g}"
        )
    rho = np.concatenate([q1.rho[: k + 1], q2.rho[1:]])
    m = np.concatenate([q1.m[: k + 1], q2.m[1:]])
    times = q1.dt * np.arange(rho.shape[0])
    values = np.concatenate([e1.values[:k], e2.values])
    left = np.concatenate([e1.left_values[: k + 1], e2.left_values[1:]])
    signal = EnergySignal(times, values, left)
    new_id = q1.id if q1.id == q2.id else f"{q1.id}|{T:g}|{q2.id}"
    metadata = dict(q1.metadata, spliced_at=float(T), continued_with=q2.id)
    return Trajectory(q1.grid, q1.dt, rho, m, signal, new_id, metadata)


def q_distance(q1: Trajectory, q2: Trajectory, horizon: Optional[float] = None,
               cfg: Optional[NegNormConfig] = None,
               weights: Sequence[float] = (1.0, 1.0, 1.0)) -> float:
    """Metric on Q truncated at `horizon`

    Sum of the sup over grid times of the negative-norm distances of rho and
    m and the L1 distance of the energies, each with its weight.
    """
    _check_compatible(q1, q2)
    cfg = cfg or NegNormConfig.default_for(q1.grid)
    horizon = min(q1.t_end, q2.t_end) if horizon is None else float(horizon)
    limit = min(q1.t_end, q2.t_end)
    if horizon > limit + TIME_TOL * q1.dt or horizon < 0:
        raise DomainError(f"horizon {horizon:g} exceeds the stored time range {limit:g}")
    n = int(math.floor(horizon / q1.dt + TIME_TOL)) + 1
    d_rho = neg_sobolev_norm_batch(q1.rho[:n] - q2.rho[:n], q1.grid, cfg)
    d_m = neg_sobolev_norm_batch(q1.m[:n] - q2.m[:n], q1.grid, cfg)
    d_e = q1.energy.l1_distance(q2.energy, horizon)
    w_rho, w_m, w_e = weights
    return float(w_rho * np.max(d_rho) + w_m * np.max(d_m) + w_e * d_e)


class TrajectorySet:
    """Finite set of trajectories sharing their initial data"""

    def __init__(self, data: InitialData, members: Sequence[Trajectory] = (),
                 cfg: Optional[NegNormConfig] = None):
        self.data = data
        self.cfg = cfg or NegNormConfig.default_for(data.grid)
        self.metadata: dict = {}
        self.members: list[Trajectory] = []
        for q in members:
            self._check_member(q)
            self.members.append(q)

    def _check_member(self, q: Trajectory) -> None:
        if any(p.id == q.id for p in self.members):
            raise DomainError(f"duplicate trajectory id '{q.id}' in set")
        if q.grid != self.data.grid:
            raise InitialDataMismatchError(f"member '{q.id}' lives on a different grid")
        if self.members and abs(q.dt - self.members[0].dt) > 1e-12 * q.dt:
            raise InitialDataMismatchError(f"member '{q.id}' uses a different time step")
        gap = float(
            neg_sobolev_norm_batch(q.rho[0] - self.data.rho0.values, q.grid, self.cfg)
            + neg_sobolev_norm_batch(q.m[0] - self.data.m0.values, q.grid, self.cfg)
        )
        slot_gap = abs(q.energy.initial_slot - self.data.E0)
        if gap > 1e-12 or slot_gap > ENERGY_TOL * max(1.0, abs(self.data.E0)):
            raise InitialDataMismatchError(
                f"member '{q.id}' does not start from the shared initial data "
                f"(field gap {gap:.3e}, energy gap {slot_gap:.3e})"
            )

    def add(self, q: Trajectory) -> None:
        self._check_member(q)
        self.members.append(q)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.members)

    def __getitem__(self, index: int) -> Trajectory:
        return self.members[index]

    @property
    def ids(self) -> list[str]:
        return [q.id for q in self.members]

    @property
    def horizon(self) -> float:
        if not self.members:
            raise EmptySetError("trajectory set is empty")
        return min(q.t_end for q in self.members)

    def subset(self, members: Sequence[Trajectory]) -> "TrajectorySet":
        return TrajectorySet(self.data, members, self.cfg)

    def diameter(self, horizon: Optional[float] = None) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.max(distance_matrix(self.members, self.members, horizon, self.cfg)))


def distance_matrix(A: Sequence[Trajectory], B: Sequence[Trajectory], horizon: Optional[float] = None,
                    cfg: Optional[NegNormConfig] = None) -> np.ndarray:
    out = np.zeros((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            out[i, j] = 0.0 if a is b else q_distance(a, b, horizon, cfg)
    return out


def hausdorff(A: TrajectorySet | Sequence[Trajectory], B: TrajectorySet | Sequence[Trajectory],
              horizon: Optional[float] = None, cfg: Optional[NegNormConfig] = None) -> float:
    """Hausdorff distance induced by q_distance over two finite sets"""
    a, b = list(A), list(B)
    if not a or not b:
        raise EmptySetError("Hausdorff distance of an empty trajectory set (solution set must be non-empty)")
    if horizon is None:
        horizon = min(q.t_end for q in a + b)
    d = distance_matrix(a, b, horizon, cfg)
    return float(max(np.max(np.min(d, axis=1)), np.max(np.min(d, axis=0))))
