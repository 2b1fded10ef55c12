"""Weak Form - Residual verifiers for dissipative weak solutions

Every check returns a number: 0 (or a nonpositive margin) is perfect
conformance at the sampled resolution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, VacuumError
from .physics import PressureLaw, ViscosityPair, pressure, stress
from .state import DIRICHLET, Grid, velocity_gradient
from .trajectory import EnergySignal, Trajectory

logger = logging.getLogger(__name__)

VACUUM_THRESHOLD = 1e-10
VACUUM_FRACTION_LIMIT = 0.01

Forcing = Callable[[float, Grid], np.ndarray]


# ------------------------------------------------------------------
# Renormalization pairs
# ------------------------------------------------------------------

@dataclass(frozen=True)
class RenormalizationPair:
    """Renormalizing function B with its companion b(z) = z*B'(z) - B(z)"""

    name: str
    B: Callable[[np.ndarray], np.ndarray]
    dB: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    bounded: bool

    def identity_residual(self, z: np.ndarray) -> float:
        """max |b(z) - (z*B'(z) - B(z))| over positive samples"""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("identity samples must be positive")
        return float(np.max(np.abs(self.b(z) - (z * self.dB(z) - self.B(z)))))


def identity_pair() -> RenormalizationPair:
    return RenormalizationPair(
        "identity",
        B=lambda z: np.asarray(z, dtype=float),
        dB=lambda z: np.ones_like(np.asarray(z, dtype=float)),
        b=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        bounded=True,
    )


def log_pair(eps: float = 1e-6) -> RenormalizationPair:
    """B(z) = z log(z + eps); b(z) = z^2/(z + eps) is unbounded"""
    if eps <= 0:
        raise ConfigurationError(f"log regularization must be positive, got {eps}", "verification.log_eps")
    return RenormalizationPair(
        "log",
        B=lambda z: z * np.log(z + eps),
        dB=lambda z: np.log(z + eps) + z / (z + eps),
        b=lambda z: z**2 / (z + eps),
        bounded=False,
    )


def rational_pair() -> RenormalizationPair:
    """B(z) = z^2/(1+z); b(z) = z^2/(1+z)^2 is bounded by 1"""
    return RenormalizationPair(
        "rational",
        B=lambda z: z**2 / (1.0 + z),
        dB=lambda z: (z**2 + 2.0 * z) / (1.0 + z) ** 2,
        b=lambda z: z**2 / (1.0 + z) ** 2,
        bounded=True,
    )


def default_pairs() -> list[RenormalizationPair]:
    return [identity_pair(), log_pair(), rational_pair()]


# ------------------------------------------------------------------
# Test functions
# ------------------------------------------------------------------

def _axis_functions(grid: Grid, axis: int, count: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(values, derivative) of the first spatial modes along one axis"""
    L = grid.extents[axis]
    x = grid.centers(axis)
    out = []
    if grid.boundary == DIRICHLET:
        for k in range(1, count + 1):
            w = k * math.pi / L
            out.append((np.sin(w * x), w * np.cos(w * x)))
    else:
        out.append((np.ones_like(x), np.zeros_like(x)))
        k = 1
        while len(out) < count:
            w = 2.0 * k * math.pi / L
            out.append((np.cos(w * x), -w * np.sin(w * x)))
            out.append((np.sin(w * x), w * np.cos(w * x)))
            k += 1
    return out[:count]


def spatial_modes(grid: Grid, count: int) -> tuple[np.ndarray, np.ndarray]:
    """First `count` scalar modes and their analytic gradients

    Returns:
        (values (count, *shape), gradients (count, *shape, N))
    """
    per_axis = count if grid.dimension == 1 else int(math.ceil(math.sqrt(count))) + 1
    axes = [_axis_functions(grid, a, per_axis) for a in range(grid.dimension)]
    if grid.dimension == 1:
        vals = [f for f, _ in axes[0]]
        grads = [df[:, None] for _, df in axes[0]]
    else:
        pairs = sorted(
            ((i, j) for i in range(per_axis) for j in range(per_axis)), key=lambda ij: (ij[0] + ij[1], ij[0])
        )
        vals, grads = [], []
        for i, j in pairs:
            fx, dfx = axes[0][i]
            fy, dfy = axes[1][j]
            vals.append(np.outer(fx, fy))
            grads.append(np.stack([np.outer(dfx, fy), np.outer(fx, dfy)], axis=-1))
    return np.stack(vals[:count]), np.stack(grads[:count])


class TestFunctionSuite:
    """Space-time test functions theta(t) * X(x) with analytic derivatives

    The spatial factors are boundary-matching modes (sine products on no-slip
    grids, Fourier on periodic ones); the time factor is the C1 bump
    theta(t) = (1 - (t/T_s)^2)^2 with T_s = 2*horizon. An optional weight
    matrix combines the base modes into the suite members.

    Args:
        grid: Spatial grid
        horizon: Largest time the suite is used on
        count: Number of members M per kind
        weights: Optional (M_out, M) combination matrix
    """

    __test__ = False

    def __init__(self, grid: Grid, horizon: float, count: int = 8, weights: Optional[np.ndarray] = None):
        if count < 1:
            raise ConfigurationError(f"test suite needs at least one member, got {count}", "verification.suite_size")
        if horizon <= 0:
            raise DomainError(f"test suite horizon must be positive, got {horizon}")
        self.grid = grid
        self.horizon = float(horizon)
        self.count = count
        self.time_scale = 2.0 * self.horizon
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        if self.weights is not None and self.weights.shape[1] != count:
            raise ConfigurationError("weight matrix columns must match the member count", "verification.weights")

    def theta(self, t: np.ndarray) -> np.ndarray:
        s = np.asarray(t, dtype=float) / self.time_scale
        return (1.0 - s**2) ** 2

    def dtheta(self, t: np.ndarray) -> np.ndarray:
        s = np.asarray(t, dtype=float) / self.time_scale
        return -4.0 * s * (1.0 - s**2) / self.time_scale

    def _combine(self, base: np.ndarray) -> np.ndarray:
        if self.weights is None:
            return base
        return np.tensordot(self.weights, base, axes=(1, 0))

    def scalar(self) -> tuple[np.ndarray, np.ndarray]:
        """(values (M, *shape), gradients (M, *shape, N))"""
        vals, grads = spatial_modes(self.grid, self.count)
        return self._combine(vals), self._combine(grads)

    def vector(self) -> tuple[np.ndarray, np.ndarray]:
        """(values (M, *shape, N), gradients (M, *shape, N, N)) with [..., i, j] = d_j phi_i"""
        N = self.grid.dimension
        modes = int(math.ceil(self.count / N))
        vals, grads = spatial_modes(self.grid, modes)
        out_v, out_g = [], []
        for f, g in zip(vals, grads):
            for comp in range(N):
                v = np.zeros(f.shape + (N,))
                v[..., comp] = f
                dg = np.zeros(f.shape + (N, N))
                dg[..., comp, :] = g
                out_v.append(v)
                out_g.append(dg)
        return self._combine(np.stack(out_v[: self.count])), self._combine(np.stack(out_g[: self.count]))


class EnergyTestSuite:
    """Nonnegative C1 time weights psi for the energy inequality

    psi = 1 plus compact bumps (1 - ((t - c)/w)^2)^2 centered across the horizon.
    """

    __test__ = False

    def __init__(self, horizon: float, bumps: int = 3):
        self.horizon = float(horizon)
        self.width = self.horizon / 2.0
        self.centers = np.linspace(0.0, self.horizon, bumps) if bumps > 0 else np.array([])

    def __len__(self) -> int:
        return 1 + len(self.centers)

    def values(self, t: np.ndarray) -> np.ndarray:
        """psi_k(t_i) as an array of shape (K, len(t))"""
        t = np.asarray(t, dtype=float)
        rows = [np.ones_like(t)]
        for c in self.centers:
            s = (t - c) / self.width
            rows.append(np.where(np.abs(s) < 1.0, (1.0 - s**2) ** 2, 0.0))
        return np.stack(rows)

    def derivatives(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        rows = [np.zeros_like(t)]
        for c in self.centers:
            s = (t - c) / self.width
            rows.append(np.where(np.abs(s) < 1.0, -4.0 * s * (1.0 - s**2) / self.width, 0.0))
        return np.stack(rows)


# ------------------------------------------------------------------
# Helpers
# ------------------------------------------------------------------

def recover_velocity(rho: np.ndarray, m: np.ndarray, threshold: float = VACUUM_THRESHOLD,
                     fraction_limit: float = VACUUM_FRACTION_LIMIT) -> tuple[np.ndarray, float]:
    """u = m / rho away from vacuum, 0 on vacuum cells

    Returns:
        (velocity, worst vacuum fraction over the time samples)
    """
    vacuum = rho < threshold
    spatial = tuple(range(1, rho.ndim))
    fraction = float(np.max(np.mean(vacuum, axis=spatial))) if rho.ndim > 1 else float(np.mean(vacuum))
    if fraction > fraction_limit:
        raise VacuumError(fraction, fraction_limit)
    if fraction > 0:
        logger.debug(f"Vacuum cells: worst fraction {fraction:.3%}")
    u = m / np.maximum(rho, threshold)[..., None]
    u[vacuum] = 0.0
    return u, fraction


def _trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    if n == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5 * dt
    return w


def _time_bracket(suite: TestFunctionSuite, traj: Trajectory, k: int, pairing: np.ndarray,
                  source: np.ndarray) -> np.ndarray:
    """Residual |[∫F θ]_0^τ - ∫F θ' - ∫ source θ| per member

    pairing and source have shape (k+1, M). The θ' term integrates θ exactly
    on every step with a trapezoid in F, so stationary pairings cancel to rounding.
    """
    t = traj.times[: k + 1]
    theta = suite.theta(t)
    bracket = theta[-1] * pairing[-1] - theta[0] * pairing[0]
    d_theta = np.diff(theta)
    time_term = np.sum(0.5 * (pairing[1:] + pairing[:-1]) * d_theta[:, None], axis=0)
    source_term = _trapezoid_weights(k + 1, traj.dt) @ (theta[:, None] * source)
    return np.abs(bracket - time_term - source_term)


def _pair(values: np.ndarray, funcs: np.ndarray, grid: Grid) -> np.ndarray:
    """∫ values · funcs over space; values (T, *shape[, N...]), funcs (M, *shape[, N...]) -> (T, M)"""
    T, M = values.shape[0], funcs.shape[0]
    return values.reshape(T, -1) @ funcs.reshape(M, -1).T * grid.cell_volume


# ------------------------------------------------------------------
# Residuals
# ------------------------------------------------------------------

def continuity_residual(traj: Trajectory, pair: RenormalizationPair, suite: TestFunctionSuite,
                        tau: float) -> float:
    """Renormalized continuity residual, max over the scalar suite

    [∫B(ρ)φ]_0^τ - ∫_0^τ∫ (B(ρ) ∂_tφ + B(ρ) u·∇φ - b(ρ) div u φ)
    """
    k = traj.time_index(tau)
    if k == 0:
        return 0.0
    grid = traj.grid
    rho = traj.rho[: k + 1]
    u, _ = recover_velocity(rho, traj.m[: k + 1])
    div_u = np.trace(velocity_gradient(u, grid, spatial_offset=1), axis1=-2, axis2=-1)
    B = pair.B(rho)
    b = pair.b(rho)
    phi, grad_phi = suite.scalar()

    pairing = _pair(B, phi, grid)
    flux = _pair(B[..., None] * u, grad_phi, grid)
    compression = _pair(b * div_u, phi, grid)
    residual = _time_bracket(suite, traj, k, pairing, flux - compression)
    return float(np.max(residual))


def momentum_residual(traj: Trajectory, law: PressureLaw, visc: ViscosityPair, suite: TestFunctionSuite,
                      tau: float, forcing: Optional[Forcing] = None) -> float:
    """Momentum balance residual, max over the vector suite

    [∫m·φ]_0^τ - ∫_0^τ∫ (m·∂_tφ + (ρu⊗u):∇φ + p(ρ) div φ - S(∇u):∇φ + f·φ)
    """
    k = traj.time_index(tau)
    if k == 0:
        return 0.0
    grid = traj.grid
    N = grid.dimension
    rho = traj.rho[: k + 1]
    m = traj.m[: k + 1]
    u, _ = recover_velocity(rho, m)
    grad_u = velocity_gradient(u, grid, spatial_offset=1)
    S = stress(grad_u, visc, N)
    convective = m[..., :, None] * u[..., None, :]
    p = np.asarray(pressure(rho, law))
    phi, grad_phi = suite.vector()
    div_phi = np.trace(grad_phi, axis1=-2, axis2=-1)

    pairing = _pair(m, phi, grid)
    source = _pair(convective - S, grad_phi, grid) + _pair(p, div_phi, grid)
    if forcing is not None:
        f = np.stack([forcing(float(t), grid) for t in traj.times[: k + 1]])
        source = source + _pair(f, phi, grid)
    residual = _time_bracket(suite, traj, k, pairing, source)
    return float(np.max(residual))


def dissipation_rate(traj: Trajectory, visc: ViscosityPair, upto: Optional[int] = None) -> np.ndarray:
    """∫ S(∇u):∇u dx at every stored time (up to index `upto`)"""
    end = traj.steps + 1 if upto is None else upto + 1
    u, _ = recover_velocity(traj.rho[:end], traj.m[:end])
    grad_u = velocity_gradient(u, traj.grid, spatial_offset=1)
    S = stress(grad_u, visc, traj.grid.dimension)
    density = np.sum(S * grad_u, axis=(-2, -1))
    return traj.grid.integrate_batch(density)


def dissipation_integral(traj: Trajectory, visc: ViscosityPair, t0: float, t1: float) -> float:
    """∫_{t0}^{t1}∫ S(∇u):∇u dx dt by trapezoid in time"""
    k0, k1 = traj.time_index(t0), traj.time_index(t1)
    if k1 < k0:
        raise DomainError(f"dissipation window [{t0:g}, {t1:g}] is reversed")
    if k1 == k0:
        return 0.0
    rate = dissipation_rate(traj, visc, upto=k1)[k0:]
    return float(_trapezoid_weights(k1 - k0 + 1, traj.dt) @ rate)


def energy_inequality_margin(traj: Trajectory, visc: ViscosityPair, psi_suite: Optional[EnergyTestSuite] = None,
                             window: Optional[tuple[float, float]] = None) -> float:
    """Largest ψ-weighted energy inequality margin over the suite

    [Eψ]_{τ1-}^{τ2+} - ∫Eψ' + ∫ψ∫S:∇u, evaluated in its integrated-by-parts
    form ∫ψ dE + ∫ψ D with E linear between samples. Nonpositive values conform.
    """
    psi_suite = psi_suite or EnergyTestSuite(traj.t_end)
    t0, t1 = window if window is not None else (0.0, traj.t_end)
    k0, k1 = traj.time_index(t0), traj.time_index(t1)
    if k1 < k0:
        raise DomainError(f"energy window [{t0:g}, {t1:g}] is reversed")
    e = traj.energy
    t = traj.times[k0: k1 + 1]
    psi = psi_suite.values(t)

    jumps = psi @ (e.values[k0: k1 + 1] - e.left_values[k0: k1 + 1])
    drift = e.left_values[k0 + 1: k1 + 1] - e.values[k0:k1]
    continuous = 0.5 * (psi[:, 1:] + psi[:, :-1]) @ drift
    if k1 > k0:
        rate = dissipation_rate(traj, visc, upto=k1)[k0:]
        dissipation = (psi * rate) @ _trapezoid_weights(k1 - k0 + 1, traj.dt)
    else:
        dissipation = np.zeros(len(psi))
    return float(np.max(jumps + continuous + dissipation))


def bv_monotone_check(E: EnergySignal) -> bool:
    """True iff E is nonincreasing including the E(0-) slot"""
    return E.is_nonincreasing()


def initial_energy_check(E: EnergySignal, E0: Optional[float] = None) -> float:
    """E(0+) - E0 (E0 defaults to the E(0-) slot); nonpositive conforms"""
    reference = E.initial_slot if E0 is None else E0
    return float(E.values[0] - reference)


# ------------------------------------------------------------------
# Aggregated verification
# ------------------------------------------------------------------

@dataclass
class Thresholds:
    """Pass thresholds of one verification run"""

    continuity: float = 1e-6
    momentum: float = 1e-6
    energy: float = 1e-6

    def to_dict(self) -> dict:
        return {"continuity": self.continuity, "momentum": self.momentum, "energy": self.energy}


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "passed": self.passed,
            **({"detail": self.detail} if self.detail else {}),
        }


@dataclass
class VerificationReport:
    trajectory_id: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def verify_trajectory(traj: Trajectory, law: PressureLaw, visc: ViscosityPair,
                      thresholds: Optional[Thresholds] = None,
                      pairs: Optional[Sequence[RenormalizationPair]] = None,
                      suite_size: int = 8, forcing: Optional[Forcing] = None,
                      taus: Optional[Sequence[float]] = None) -> VerificationReport:
    """Run every weak-form check on one trajectory

    Residuals are evaluated at each tau in `taus` (default: the horizon) and
    the worst value is reported.
    """
    thresholds = thresholds or Thresholds()
    pairs = list(pairs) if pairs is not None else default_pairs()
    taus = list(taus) if taus is not None else [traj.t_end]
    suite = TestFunctionSuite(traj.grid, max(traj.t_end, traj.dt), suite_size)
    report = VerificationReport(traj.id)

    monotone = bv_monotone_check(traj.energy)
    report.checks.append(CheckResult("bv_monotone", 0.0 if monotone else 1.0, 0.0, monotone))
    initial = initial_energy_check(traj.energy)
    initial_ok = initial <= 1e-12 * max(1.0, abs(traj.energy.initial_slot))
    report.checks.append(CheckResult("initial_energy", initial, 0.0, initial_ok))

    if traj.steps == 0:
        return report

    attained = [float(np.min(traj.rho)), float(np.max(traj.rho))]
    for pair in pairs:
        value = max(continuity_residual(traj, pair, suite, tau) for tau in taus)
        detail = {"attained_density_range": attained, "b_bounded": pair.bounded}
        report.checks.append(
            CheckResult(f"continuity[{pair.name}]", value, thresholds.continuity,
                        value <= thresholds.continuity, detail)
        )

    value = max(momentum_residual(traj, law, visc, suite, tau, forcing) for tau in taus)
    report.checks.append(CheckResult("momentum", value, thresholds.momentum, value <= thresholds.momentum))

    margin = energy_inequality_margin(traj, visc)
    report.checks.append(CheckResult("energy_inequality", margin, thresholds.energy, margin <= thresholds.energy))

    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        logger.warning(f"Trajectory '{traj.id}' failed checks: {', '.join(failed)}")
    else:
        logger.info(f"Trajectory '{traj.id}' passed all {len(report.checks)} checks")
    return report
