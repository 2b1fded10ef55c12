"""Systems - Candidate generators: a desk-scale Navier-Stokes solver and the funnel family"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .errors import CFLViolationError, ConfigurationError, DegenerateFamilyError, PositivityError
from .physics import PressureLaw, ViscosityPair, pressure, pressure_derivative, total_energy
from .state import DIRICHLET, Grid, InitialData, ScalarField, VectorField, pad_with_ghosts
from .trajectory import EnergySignal, Trajectory, TrajectorySet, q_distance, shift
from .weakform import Thresholds, verify_trajectory

logger = logging.getLogger(__name__)

LAX_FRIEDRICHS = "lax_friedrichs_viscous"
MACCORMACK = "maccormack_viscous"
SCHEMES = (LAX_FRIEDRICHS, MACCORMACK)

MAX_2D_CELLS = 64
MAX_2D_HORIZON = 2.0

Forcing = Callable[[float, Grid], np.ndarray]


@dataclass(frozen=True)
class SolverConfig:
    """Numerical parameters of one Navier-Stokes run

    Args:
        grid: Spatial grid
        dt: Time step
        t_end: Horizon (a multiple of dt)
        law: Pressure law
        visc: Viscosity pair
        scheme: "lax_friedrichs_viscous" (Rusanov fluxes, SSP-RK2) or "maccormack_viscous"
        artificial_viscosity: Extra diffusion on density and momentum
        cfl: Safety factor of the advective and viscous limits
        save_every: Store every n-th step
        forcing: Optional momentum source f(t, grid) -> (*shape, N)
        progress: Show a tqdm bar over time steps
        desk_scale: Enforce the 2D caps (64 cells per axis, horizon 2)
    """

    grid: Grid
    dt: float
    t_end: float
    law: PressureLaw = field(default_factory=PressureLaw)
    visc: ViscosityPair = field(default_factory=ViscosityPair)
    scheme: str = LAX_FRIEDRICHS
    artificial_viscosity: float = 0.0
    cfl: float = 0.9
    save_every: int = 1
    forcing: Optional[Forcing] = None
    progress: bool = False
    desk_scale: bool = True

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def validate(self) -> tuple[bool, list[str], list[str]]:
        """Validate configuration

        Returns:
            (is_valid, errors, warnings)
        """
        errors, warnings = [], []
        if not self.dt > 0:
            errors.append(f"solver.dt must be positive, got {self.dt}")
        elif abs(self.steps * self.dt - self.t_end) > 1e-9 * self.dt or self.steps < 1:
            errors.append(f"solver.t_end={self.t_end} is not a positive multiple of dt={self.dt}")
        elif self.steps % self.save_every != 0:
            errors.append(f"solver.save_every={self.save_every} does not divide the {self.steps} steps")
        if self.scheme not in SCHEMES:
            errors.append(f"solver.scheme must be one of {SCHEMES}, got '{self.scheme}'")
        if self.artificial_viscosity < 0:
            errors.append("solver.artificial_viscosity must be nonnegative")
        if not 0 < self.cfl <= 1:
            errors.append(f"solver.cfl must lie in (0, 1], got {self.cfl}")
        if self.save_every < 1:
            errors.append("solver.save_every must be >= 1")
        ok, law_errors = self.law.validate()
        errors.extend(law_errors)
        if self.grid.dimension == 2 and self.desk_scale:
            if max(self.grid.cells) > MAX_2D_CELLS:
                errors.append(f"grid.cells: 2D runs are capped at {MAX_2D_CELLS} cells per axis")
            if self.t_end > MAX_2D_HORIZON:
                errors.append(f"solver.t_end: 2D runs are capped at horizon {MAX_2D_HORIZON}")
        if self.scheme == MACCORMACK and self.artificial_viscosity == 0:
            warnings.append("maccormack_viscous without artificial viscosity may oscillate near steep gradients")
        return (len(errors) == 0, errors, warnings)

    def stable_dt(self, rho: np.ndarray, m: np.ndarray) -> float:
        """Largest time step allowed by the advective and viscous limits"""
        h = self.grid.min_spacing
        N = self.grid.dimension
        u = m / rho[..., None]
        c = np.sqrt(np.maximum(np.asarray(pressure_derivative(rho, self.law)), 0.0))
        speed = float(np.max(np.max(np.abs(u), axis=-1) + c))
        advective = math.inf if speed == 0 else h / speed
        nu = (self.visc.planar_coefficient() if N == 1 else self.visc.mu + self.visc.bulk) / float(np.min(rho))
        diffusivity = max(nu, self.artificial_viscosity)
        viscous = math.inf if diffusivity == 0 else h**2 / (2.0 * N * diffusivity)
        return self.cfl * min(advective, viscous)


# ------------------------------------------------------------------
# Spatial operators
# ------------------------------------------------------------------

def _slice(ndim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _euler_flux(rho: np.ndarray, m: np.ndarray, axis: int, law: PressureLaw) -> tuple[np.ndarray, np.ndarray]:
    """Inviscid flux along one axis: (m_a, m_a u + p e_a)"""
    u = m / rho[..., None]
    flux_m = m[..., axis][..., None] * u
    flux_m[..., axis] += np.asarray(pressure(rho, law))
    return m[..., axis], flux_m


def _wave_speed(rho: np.ndarray, m: np.ndarray, axis: int, law: PressureLaw) -> np.ndarray:
    c = np.sqrt(np.maximum(np.asarray(pressure_derivative(rho, law)), 0.0))
    return np.abs(m[..., axis] / rho) + c


def _padded(rho: np.ndarray, m: np.ndarray, grid: Grid, axis: int, width: int = 1):
    return (pad_with_ghosts(rho, grid, axis, odd=False, width=width),
            pad_with_ghosts(m, grid, axis, odd=True, width=width))


def _rusanov_divergence(rho: np.ndarray, m: np.ndarray, grid: Grid, law: PressureLaw):
    """Divergence of local Lax-Friedrichs fluxes over every axis"""
    div_rho = np.zeros_like(rho)
    div_m = np.zeros_like(m)
    for axis in range(grid.dimension):
        rp, mp = _padded(rho, m, grid, axis)
        L, R = _slice(rp.ndim, axis, slice(0, -1)), _slice(rp.ndim, axis, slice(1, None))
        f_rho, f_m = _euler_flux(rp, mp, axis, law)
        speed = np.maximum(_wave_speed(rp[L], mp[L], axis, law), _wave_speed(rp[R], mp[R], axis, law))
        face_rho = 0.5 * (f_rho[L] + f_rho[R]) - 0.5 * speed * (rp[R] - rp[L])
        face_m = 0.5 * (f_m[L] + f_m[R]) - 0.5 * speed[..., None] * (mp[R] - mp[L])
        hi, lo = _slice(rho.ndim, axis, slice(1, None)), _slice(rho.ndim, axis, slice(0, -1))
        h = grid.spacing[axis]
        div_rho += (face_rho[hi] - face_rho[lo]) / h
        div_m += (face_m[hi] - face_m[lo]) / h
    return div_rho, div_m


def _one_sided_divergence(rho: np.ndarray, m: np.ndarray, grid: Grid, law: PressureLaw, forward: bool):
    """Physical-flux divergence by forward (predictor) or backward (corrector) differences"""
    div_rho = np.zeros_like(rho)
    div_m = np.zeros_like(m)
    for axis in range(grid.dimension):
        rp, mp = _padded(rho, m, grid, axis)
        f_rho, f_m = _euler_flux(rp, mp, axis, law)
        n = rho.shape[axis]
        if forward:
            hi, lo = _slice(rp.ndim, axis, slice(2, n + 2)), _slice(rp.ndim, axis, slice(1, n + 1))
        else:
            hi, lo = _slice(rp.ndim, axis, slice(1, n + 1)), _slice(rp.ndim, axis, slice(0, n))
        h = grid.spacing[axis]
        div_rho += (f_rho[hi] - f_rho[lo]) / h
        div_m += (f_m[hi] - f_m[lo]) / h
    return div_rho, div_m


def _laplacian(values: np.ndarray, grid: Grid, odd: bool) -> np.ndarray:
    out = np.zeros_like(values)
    for axis in range(grid.dimension):
        p = pad_with_ghosts(values, grid, axis, odd=odd)
        n = values.shape[axis]
        out += (p[_slice(p.ndim, axis, slice(2, n + 2))] - 2.0 * values
                + p[_slice(p.ndim, axis, slice(0, n))]) / grid.spacing[axis] ** 2
    return out


def viscous_force(u: np.ndarray, grid: Grid, visc: ViscosityPair) -> np.ndarray:
    """div S(grad u) with no-slip (odd) or periodic ghost cells

    1D uses the planar coefficient; 2D uses mu*Lap u + bulk*grad(div u).
    """
    if grid.dimension == 1:
        return visc.planar_coefficient() * _laplacian(u, grid, odd=True)
    hx, hy = grid.spacing
    up = pad_with_ghosts(pad_with_ghosts(u, grid, 0, odd=True, width=2), grid, 1, odd=True, width=2)
    dux = (up[2:, 1:-1, 0] - up[:-2, 1:-1, 0]) / (2.0 * hx)
    duy = (up[1:-1, 2:, 1] - up[1:-1, :-2, 1]) / (2.0 * hy)
    div = dux + duy
    grad_div = np.stack(
        [(div[2:, 1:-1] - div[:-2, 1:-1]) / (2.0 * hx), (div[1:-1, 2:] - div[1:-1, :-2]) / (2.0 * hy)], axis=-1
    )
    return visc.mu * _laplacian(u, grid, odd=True) + visc.bulk * grad_div


def _sources(rho: np.ndarray, m: np.ndarray, t: float, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Viscous, artificial-diffusion and forcing terms of the right-hand side"""
    u = m / rho[..., None]
    src_m = viscous_force(u, cfg.grid, cfg.visc)
    src_rho = np.zeros_like(rho)
    if cfg.artificial_viscosity > 0:
        src_rho += cfg.artificial_viscosity * _laplacian(rho, cfg.grid, odd=False)
        src_m += cfg.artificial_viscosity * _laplacian(m, cfg.grid, odd=True)
    if cfg.forcing is not None:
        src_m += cfg.forcing(t, cfg.grid)
    return src_rho, src_m


def _check_positive(rho: np.ndarray, step: int) -> None:
    if np.any(rho <= 0):
        cell = tuple(int(i) for i in np.unravel_index(np.argmin(rho), rho.shape))
        raise PositivityError(step, cell)


def _lax_friedrichs_step(rho, m, t, cfg: SolverConfig, step: int):
    def rhs(r, q, time):
        div_r, div_q = _rusanov_divergence(r, q, cfg.grid, cfg.law)
        src_r, src_q = _sources(r, q, time, cfg)
        return src_r - div_r, src_q - div_q

    k_r, k_m = rhs(rho, m, t)
    r1, m1 = rho + cfg.dt * k_r, m + cfg.dt * k_m
    _check_positive(r1, step)
    k_r, k_m = rhs(r1, m1, t + cfg.dt)
    return 0.5 * (rho + r1 + cfg.dt * k_r), 0.5 * (m + m1 + cfg.dt * k_m)


def _maccormack_step(rho, m, t, cfg: SolverConfig, step: int):
    div_r, div_m = _one_sided_divergence(rho, m, cfg.grid, cfg.law, forward=True)
    src_r, src_m = _sources(rho, m, t, cfg)
    r_star = rho + cfg.dt * (src_r - div_r)
    m_star = m + cfg.dt * (src_m - div_m)
    _check_positive(r_star, step)
    div_r, div_m = _one_sided_divergence(r_star, m_star, cfg.grid, cfg.law, forward=False)
    src_r, src_m = _sources(r_star, m_star, t + cfg.dt, cfg)
    r_new = 0.5 * (rho + r_star + cfg.dt * (src_r - div_r))
    m_new = 0.5 * (m + m_star + cfg.dt * (src_m - div_m))
    return r_new, m_new


_STEPPERS = {LAX_FRIEDRICHS: _lax_friedrichs_step, MACCORMACK: _maccormack_step}


def trajectory_id(cfg: SolverConfig) -> str:
    return f"ns-{cfg.scheme}-eps{cfg.artificial_viscosity:.3e}"


def ns_solve(data: InitialData, cfg: SolverConfig, traj_id: Optional[str] = None) -> Trajectory:
    """Integrate the compressible Navier-Stokes system from `data`

    The stored energy is the running minimum of the discrete total energy
    (including E0); the raw signal and the monotonization gap are kept in
    the trajectory metadata.

    Raises:
        ConfigurationError: Invalid solver configuration
        CFLViolationError: Time step exceeds the stability limit
        PositivityError: Density left the positive cone
    """
    ok, errors, warnings = cfg.validate()
    if not ok:
        raise ConfigurationError("; ".join(errors), "solver")
    for w in warnings:
        logger.warning(w)
    if data.grid != cfg.grid:
        raise ConfigurationError("initial data and solver use different grids", "grid")

    rho = np.array(data.rho0.values, dtype=float)
    m = np.array(data.m0.values, dtype=float)
    _check_positive(rho, 0)
    stepper = _STEPPERS[cfg.scheme]

    limit = cfg.stable_dt(rho, m)
    if cfg.dt > limit:
        raise CFLViolationError(f"dt={cfg.dt:g} exceeds the stable limit {limit:.3e}", 0)
    logger.info(f"Solving {cfg.scheme} on {cfg.grid.cells} cells, dt={cfg.dt:g}, steps={cfg.steps}, "
                f"eps_art={cfg.artificial_viscosity:g} (stable dt {limit:.3e})")

    rhos, ms = [rho.copy()], [m.copy()]
    iterator = range(1, cfg.steps + 1)
    if cfg.progress:
        iterator = tqdm(iterator, desc="Time steps", leave=False)
    for step in iterator:
        rho, m = stepper(rho, m, (step - 1) * cfg.dt, cfg, step)
        _check_positive(rho, step)
        limit = cfg.stable_dt(rho, m)
        if cfg.dt > limit:
            raise CFLViolationError(f"dt={cfg.dt:g} exceeds the stable limit {limit:.3e}", step)
        if step % cfg.save_every == 0:
            rhos.append(rho.copy())
            ms.append(m.copy())

    raw = np.array([
        total_energy(ScalarField(cfg.grid, r), VectorField(cfg.grid, q), cfg.law) for r, q in zip(rhos, ms)
    ])
    stored = np.minimum.accumulate(np.concatenate([[data.E0], raw]))[1:]
    gap = float(np.max(raw - stored))
    if gap > 0:
        logger.warning(f"Discrete energy rose by up to {gap:.3e}; stored signal is its running minimum")
    save_dt = cfg.dt * cfg.save_every
    times = save_dt * np.arange(len(rhos))
    signal = EnergySignal.step(times, stored, initial_slot=data.E0)
    metadata = {
        "generator": "ns_solve",
        "scheme": cfg.scheme,
        "artificial_viscosity": cfg.artificial_viscosity,
        "raw_energy": raw.tolist(),
        "monotonization_gap": gap,
    }
    return Trajectory(cfg.grid, save_dt, np.stack(rhos), np.stack(ms), signal,
                      traj_id or trajectory_id(cfg), metadata)


# ------------------------------------------------------------------
# Candidate families
# ------------------------------------------------------------------

@dataclass
class FamilyConfig:
    """Parameter family of solver runs

    Args:
        parameters: Artificial-viscosity values, one run each
        delta_dup: Q-distance below which two runs count as one member
        restart_times: Grid times at which shift consistency is certified
        workers: Thread count for the independent runs
        thresholds: If set, members failing weak-form verification are dropped
    """

    parameters: list[float] = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])
    delta_dup: float = 1e-8
    restart_times: list[float] = field(default_factory=list)
    workers: int = 1
    thresholds: Optional[Thresholds] = None

    def validate(self) -> tuple[bool, list[str], list[str]]:
        errors, warnings = [], []
        if not self.parameters:
            errors.append("family.parameters needs at least one value")
        if any(p < 0 for p in self.parameters):
            errors.append("family.parameters must be nonnegative")
        if len(set(self.parameters)) != len(self.parameters):
            errors.append("family.parameters repeats a value")
        if self.delta_dup < 0:
            errors.append("family.delta_dup must be nonnegative")
        if self.workers < 1:
            errors.append("family.workers must be >= 1")
        return (len(errors) == 0, errors, warnings)


def generate_candidates(data: InitialData, family: FamilyConfig, solver: SolverConfig) -> TrajectorySet:
    """Run the solver over the family's parameters and deduplicate

    The set's metadata records the dropped duplicates, the consecutive
    Q-distances along the family and the restart certificates.

    Raises:
        DegenerateFamilyError: No member survives verification
    """
    ok, errors, _ = family.validate()
    if not ok:
        raise ConfigurationError("; ".join(errors), "family")

    configs = [replace(solver, artificial_viscosity=eps, progress=False) for eps in family.parameters]
    with ThreadPoolExecutor(max_workers=family.workers) as pool:
        runs = list(tqdm(pool.map(lambda c: ns_solve(data, c), configs), total=len(configs),
                         desc="Candidate runs", disable=not solver.progress))

    consecutive = [q_distance(a, b) for a, b in zip(runs[:-1], runs[1:])]

    if family.thresholds is not None:
        passing = []
        for q in runs:
            report = verify_trajectory(q, solver.law, solver.visc, family.thresholds)
            if report.passed:
                passing.append(q)
            else:
                logger.warning(f"Dropping candidate '{q.id}': weak-form verification failed")
        runs = passing
    if not runs:
        raise DegenerateFamilyError("no candidate survived verification")

    kept: list[Trajectory] = []
    dropped: dict[str, str] = {}
    for q in runs:
        twin = next((k for k in kept if q_distance(k, q) <= family.delta_dup), None)
        if twin is None:
            kept.append(q)
        else:
            dropped[q.id] = twin.id
    logger.info(f"Family of {len(configs)} runs deduplicated to {len(kept)} members")

    certificates = []
    for q in kept:
        for T in family.restart_times:
            state = q.evaluate(T)
            rest = replace(solver, artificial_viscosity=q.metadata["artificial_viscosity"],
                           t_end=q.t_end - T, progress=False)
            rerun = ns_solve(state.as_initial_data(), rest, q.id)
            deviation = q_distance(shift(q, T), rerun)
            certificates.append({"id": q.id, "T": float(T), "deviation": deviation,
                                 "ok": deviation <= family.delta_dup})
            logger.info(f"Restart certificate '{q.id}' at T={T:g}: deviation {deviation:.3e}")

    members = TrajectorySet(data, kept)
    members.metadata.update({
        "parameters": list(family.parameters),
        "duplicates": dropped,
        "consecutive_distances": consecutive,
        "restart_certificates": certificates,
    })
    return members


class SolverSystem:
    """Candidate system backed by the solver: InitialData -> TrajectorySet"""

    def __init__(self, family: FamilyConfig, solver: SolverConfig):
        self.family = family
        self.solver = solver

    def __call__(self, data: InitialData) -> TrajectorySet:
        return generate_candidates(data, self.family, self.solver)


# ------------------------------------------------------------------
# Funnel family
# ------------------------------------------------------------------

FUNNEL_ZERO = "funnel-zero"


def funnel_grid(cells: int = 32) -> Grid:
    return Grid((1.0,), (cells,), DIRICHLET)


def _funnel_trajectory(grid: Grid, dt: float, steps: int, x: np.ndarray, integral: np.ndarray,
                       E0: float, traj_id: str, meta: dict) -> Trajectory:
    times = dt * np.arange(steps + 1)
    rho = np.ones((steps + 1,) + grid.shape)
    m = np.zeros((steps + 1,) + grid.shape + (grid.dimension,))
    m[..., 0] = x.reshape((steps + 1,) + (1,) * grid.dimension)
    values = E0 - integral
    signal = EnergySignal(times, values, np.concatenate([[E0], values[1:]]))
    return Trajectory(grid, dt, rho, m, signal, traj_id, dict(meta, generator="funnel"))


def funnel_state(data: InitialData) -> float:
    """x0 recovered by pairing m0 with e_1 and dividing by |Ω|"""
    grid = data.grid
    volume = float(np.prod(grid.extents))
    return grid.integrate(data.m0.values[..., 0]) / volume


def toy_funnel_solutions(branch_times: Sequence[float], t_end: float, dt: float, E0: float = 1.0,
                         x0: float = 0.0, grid: Optional[Grid] = None) -> TrajectorySet:
    """Solutions of x' = 2 sqrt|x| embedded in Q

    From x0 = 0 the family is x = 0 plus x_c(t) = max(t - c, 0)^2 for every
    branch time c; from x0 > 0 it is the single solution (sqrt(x0) + t)^2.
    The energy is E0 - ∫_0^t x, so earlier branches dissipate more.
    """
    grid = grid or funnel_grid()
    steps = int(round(t_end / dt))
    probe = Trajectory.constant(
        InitialData(ScalarField.constant(grid, 1.0), VectorField.zeros(grid), E0), dt, steps, "probe"
    )
    t = probe.times
    rho0 = ScalarField.constant(grid, 1.0)
    m0_values = np.zeros(grid.shape + (grid.dimension,))
    m0_values[..., 0] = x0
    data = InitialData(rho0, VectorField(grid, m0_values), E0)

    members = []
    if x0 > 0:
        r = math.sqrt(x0)
        x = (r + t) ** 2
        integral = ((r + t) ** 3 - r**3) / 3.0
        members.append(_funnel_trajectory(grid, dt, steps, x, integral, E0, f"funnel-from-{x0:.6g}", {"x0": x0}))
    else:
        members.append(_funnel_trajectory(grid, dt, steps, np.zeros_like(t), np.zeros_like(t), E0, FUNNEL_ZERO,
                                          {"branch_time": None}))
        for c in sorted(branch_times):
            k = probe.time_index(c)
            if k >= steps:
                raise ConfigurationError(f"branch time {c:g} must lie before the horizon {t_end:g}",
                                         "funnel.branch_times")
            lag = np.maximum(t - c, 0.0)
            members.append(_funnel_trajectory(grid, dt, steps, lag**2, lag**3 / 3.0, E0, f"funnel-c{c:.4f}",
                                              {"branch_time": float(c)}))
    return TrajectorySet(data, members)


def funnel_ode_residual(traj: Trajectory) -> float:
    """max |x' - 2 sqrt(x)| at step midpoints (difference quotient vs. mean of sqrt samples)"""
    x = traj.m[(slice(None),) + (0,) * traj.grid.dimension + (0,)]
    if traj.steps == 0:
        return 0.0
    rate = np.diff(x) / traj.dt
    root = np.sqrt(np.maximum(x, 0.0))
    mid = 0.5 * (root[1:] + root[:-1])
    return float(np.max(np.abs(rate - 2.0 * mid)))


class FunnelSystem:
    """Funnel candidate system: InitialData -> TrajectorySet"""

    def __init__(self, branch_times: Sequence[float], t_end: float, dt: float, grid: Optional[Grid] = None):
        self.branch_times = list(branch_times)
        self.t_end = t_end
        self.dt = dt
        self.grid = grid or funnel_grid()

    def __call__(self, data: InitialData) -> TrajectorySet:
        x0 = funnel_state(data)
        if abs(x0) < 1e-14:
            x0 = 0.0
        members = toy_funnel_solutions(self.branch_times, self.t_end, self.dt, data.E0, x0, self.grid)
        return TrajectorySet(data, list(members), members.cfg)
