"""Physics - Constitutive laws: pressure, pressure potential, viscous stress, total energy"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, DomainError, QuadratureError, ShapeError

if TYPE_CHECKING:
    from .state import ScalarField, VectorField

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

GAMMA_LAW = "gamma_law"
TABULATED = "custom_tabulated"
LAW_KINDS = (GAMMA_LAW, TABULATED)

# Gauss-Legendre rule for q(s)/s^2 over a piece starting at x > 0
GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(12)
# Offsets z - x up to this fraction of x use the local rule; wider ones the power form
LOCAL_RATIO = 0.25


def _vectorized(values: ArrayLike, fn: Callable[[np.ndarray], np.ndarray]) -> ArrayLike:
    """Apply fn to an array view of values; scalars stay scalars"""
    arr = np.asarray(values, dtype=float)
    out = fn(arr)
    if arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class PressureLaw:
    """Barotropic pressure law p(rho) with its bound constants

    Args:
        kind: "gamma_law" (p = a*rho^gamma) or "custom_tabulated"
        a: Pressure coefficient of the gamma law
        gamma: Adiabatic exponent (also the growth exponent of the bounds)
        a1, a2, b: Constants of the bound pair checked by check_pressure_bounds
        table: (rho, p) samples for tabulated laws, rho strictly increasing from (0, 0)
        dimension: Spatial dimension the law is used in
    """

    kind: str = GAMMA_LAW
    a: float = 1.0
    gamma: float = 2.0
    a1: float = 1.0
    a2: float = 1.0
    b: float = 0.0
    table: Optional[tuple[np.ndarray, np.ndarray]] = None
    dimension: int = 1
    _interp: Optional[PchipInterpolator] = field(default=None, init=False, repr=False)
    _dinterp: Optional[Callable] = field(default=None, init=False, repr=False)
    _first: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _knot_G: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        is_valid, errors = self.validate()
        if not is_valid:
            raise ConfigurationError("; ".join(errors), "law")
        if self.kind == TABULATED:
            self._build_table()

    def validate(self) -> tuple[bool, list[str]]:
        """Check the standing assumptions on the law

        Returns:
            (is_valid, error_messages)
        """
        errors = []
        if self.kind not in LAW_KINDS:
            errors.append(f"unknown law kind '{self.kind}'")
        if self.dimension not in (1, 2, 3):
            errors.append(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if not self.gamma > self.dimension / 2:
            errors.append(f"gamma={self.gamma} must exceed N/2={self.dimension / 2}")
        if self.kind == GAMMA_LAW:
            if self.gamma <= 1.0:
                errors.append(f"gamma law needs gamma > 1 for its potential, got {self.gamma}")
            if self.a <= 0:
                errors.append(f"pressure coefficient a must be positive, got {self.a}")
        if self.kind == TABULATED:
            if self.table is None:
                errors.append("tabulated law needs a (rho, p) table")
            else:
                rho, p = (np.asarray(c, dtype=float) for c in self.table)
                if rho.ndim != 1 or rho.shape != p.shape or rho.size < 3:
                    errors.append("table needs at least three (rho, p) rows of equal length")
                elif rho[0] != 0.0 or p[0] != 0.0:
                    errors.append("table must start with the row (0, 0)")
                elif np.any(np.diff(rho) <= 0):
                    errors.append("table densities must be strictly increasing")
                elif not np.all(np.isfinite(p)):
                    errors.append("table pressures must be finite")
        return (len(errors) == 0, errors)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], rho_max: float,
                      samples: int = 601, **kwargs) -> "PressureLaw":
        """Tabulate an arbitrary pressure function on a uniform grid [0, rho_max]"""
        rho = np.linspace(0.0, rho_max, samples)
        p = np.asarray(func(rho), dtype=float)
        p[0] = 0.0
        return cls(kind=TABULATED, table=(rho, p), **kwargs)

    def _build_table(self) -> None:
        rho, p = (np.asarray(c, dtype=float) for c in self.table)
        interp = PchipInterpolator(rho, p, extrapolate=False)
        c0, c1, c2, _ = interp.c
        object.__setattr__(self, "table", (rho, p))
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_dinterp", interp.derivative())
        # The first piece starts at 0, so its local cubic is already in powers of z (p(0) = 0)
        object.__setattr__(self, "_first", np.array([0.0, c2[0], c1[0], c0[0]]))

        knot_G = np.zeros(len(rho) - 1)
        if len(rho) > 2:
            knot_G[1] = self._primitive(self._first, rho[1])
            pieces = np.arange(1, len(rho) - 2)
            knot_G[2:] = knot_G[1] + np.cumsum(self._increment(pieces, rho[2:-1]))
        object.__setattr__(self, "_knot_G", knot_G)

    @staticmethod
    def _primitive(d: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Antiderivative of (d0 + d1 z + d2 z^2 + d3 z^3) / z^2 without constant"""
        d0, d1, d2, d3 = (d[..., k] for k in range(4))
        return -d0 / z + d1 * np.log(z) + d2 * z + 0.5 * d3 * z**2

    @staticmethod
    def _power_form(c: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Expand local cubics c0 t^3 + c1 t^2 + c2 t + c3, t = z - x, in powers of z"""
        c0, c1, c2, c3 = c
        d3 = c0
        d2 = c1 - 3.0 * x * c0
        d1 = c2 - 2.0 * x * c1 + 3.0 * x**2 * c0
        d0 = c3 - x * c2 + x**2 * c1 - x**3 * c0
        return np.stack([d0, d1, d2, d3], axis=-1)

    def _increment(self, pieces: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Integral of p(s)/s^2 from the left knot of each piece (index >= 1) to z

        The power form cancels badly once x^3 * c0 dwarfs p, which happens
        where the interpolant turns, so narrow offsets use Gauss-Legendre on
        the local cubic instead.
        """
        x = self.table[0][pieces]
        t = z - x
        c = self._interp.c[:, pieces]
        out = np.empty_like(t)

        near = t <= LOCAL_RATIO * x
        if np.any(near):
            half = 0.5 * t[near]
            tau = half[:, None] * (1.0 + GAUSS_NODES)
            cn = c[:, near, None]
            q = ((cn[0] * tau + cn[1]) * tau + cn[2]) * tau + cn[3]
            s = x[near, None] + tau
            out[near] = half * ((q / s**2) @ GAUSS_WEIGHTS)

        far = ~near
        if np.any(far):
            d = self._power_form(c[:, far], x[far])
            out[far] = self._primitive(d, z[far]) - self._primitive(d, x[far])
        return out

    @property
    def rho_max(self) -> float:
        if self.kind == TABULATED:
            return float(self.table[0][-1])
        return math.inf

    def _check_range(self, rho: np.ndarray) -> None:
        if np.any(rho < 0):
            raise DomainError(f"density must be nonnegative, got min {rho.min():.6g}")
        if self.kind == TABULATED and np.any(rho > self.rho_max):
            raise DomainError(
                f"density {rho.max():.6g} exceeds the tabulated range [0, {self.rho_max:.6g}]"
            )

    def _G(self, rho: np.ndarray) -> np.ndarray:
        """Potential-per-density G = P/rho for tabulated laws (rho > 0)"""
        knots = self.table[0]
        idx = np.clip(np.searchsorted(knots, rho, side="right") - 1, 0, len(knots) - 2)
        out = np.empty_like(rho)
        first = idx == 0
        out[first] = self._primitive(self._first, rho[first])
        rest = ~first
        out[rest] = self._knot_G[idx[rest]] + self._increment(idx[rest], rho[rest])
        return out


def pressure(rho: ArrayLike, law: PressureLaw) -> ArrayLike:
    """Barotropic pressure p(rho); p(0) = 0"""

    def fn(r):
        law._check_range(r)
        if law.kind == GAMMA_LAW:
            return law.a * r**law.gamma
        return law._interp(r)

    return _vectorized(rho, fn)


def pressure_derivative(rho: ArrayLike, law: PressureLaw) -> ArrayLike:
    """p'(rho)"""

    def fn(r):
        law._check_range(r)
        if law.kind == GAMMA_LAW:
            return law.a * law.gamma * r ** (law.gamma - 1.0)
        return law._dinterp(r)

    return _vectorized(rho, fn)


def pressure_potential(rho: ArrayLike, law: PressureLaw) -> ArrayLike:
    """Pressure potential P solving rho*P' - P = p with P(0) = 0

    The gamma law uses the closed form a*rho^gamma/(gamma-1). Tabulated laws
    integrate q(z)/z^2 for the interpolating cubic q piece by piece, P = rho*G(rho).
    """

    def fn(r):
        law._check_range(r)
        if law.kind == GAMMA_LAW:
            return law.a * r**law.gamma / (law.gamma - 1.0)
        out = np.zeros_like(r)
        pos = r > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out[pos] = r[pos] * law._G(r[pos])
        if not np.all(np.isfinite(out)):
            raise QuadratureError("pressure potential is not finite", math.inf)
        return out

    return _vectorized(rho, fn)


def pressure_potential_derivative(rho: ArrayLike, law: PressureLaw) -> ArrayLike:
    """P'(rho) = (P + p)/rho for rho > 0"""

    def fn(r):
        law._check_range(r)
        if law.kind == GAMMA_LAW:
            return law.a * law.gamma * r ** (law.gamma - 1.0) / (law.gamma - 1.0)
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = law._G(r[pos]) + law._interp(r[pos]) / r[pos]
        return out

    return _vectorized(rho, fn)


@dataclass(frozen=True)
class PressurePotential:
    """Evaluator for P bound to one law, with its identity tolerance"""

    law: PressureLaw
    quadrature_tol: float = 1e-10

    def __call__(self, rho: ArrayLike) -> ArrayLike:
        return pressure_potential(rho, self.law)

    def identity_residual(self, rho: ArrayLike) -> ArrayLike:
        """Relative residual of rho*P' - P = p with P' from central differences

        P' comes from derivative_estimate, which picks the step adaptively.
        """

        def fn(r):
            if np.any(r <= 0):
                raise DomainError("identity residual needs rho > 0")
            flat = np.atleast_1d(r)
            dP, _ = self.derivative_estimate(flat)
            P = np.asarray(pressure_potential(flat, self.law))
            p = np.asarray(pressure(flat, self.law))
            scale = np.maximum.reduce([np.abs(p), np.abs(P), np.abs(flat * dP)])
            residual = np.abs(flat * dP - P - p) / np.where(scale > 0, scale, 1.0)
            return residual.reshape(r.shape)

        return _vectorized(rho, fn)

    def initial_step(self, rho: np.ndarray) -> np.ndarray:
        """Largest difference step per sample: 0.1*rho, kept inside one table piece"""
        h = 0.1 * rho
        if self.law.kind != TABULATED:
            return h
        knots = self.law.table[0]
        if np.any(rho >= self.law.rho_max):
            raise DomainError(f"identity residual needs rho below the table end {self.law.rho_max:.6g}")
        k = np.searchsorted(knots, rho)
        gap = np.minimum(rho - knots[k - 1], knots[k] - rho)
        # A sample on a knot still gets a step; the seam there is C2
        h = np.minimum(h, np.maximum(0.9 * gap, 1e-6 * rho))
        return np.minimum(h, 0.9 * (self.law.rho_max - rho))

    def derivative_estimate(self, rho: np.ndarray, levels: int = 10,
                            shrink: float = 1.4) -> tuple[np.ndarray, np.ndarray]:
        """P'(rho) by central differences on a shrinking step sequence

        Each new step is extrapolated against the coarser ones (Neville
        tableau); per sample the entry with the smallest error estimate wins,
        and a sample stops refining once rounding makes the tableau diverge.

        Returns:
            (derivative, error_estimate)
        """

        def central(h):
            up = np.asarray(pressure_potential(rho + h, self.law))
            down = np.asarray(pressure_potential(rho - h, self.law))
            return (up - down) / (2.0 * h)

        h = self.initial_step(rho)
        tableau = np.empty((levels, levels, rho.size))
        tableau[0, 0] = central(h)
        best = tableau[0, 0].copy()
        err = np.full(rho.size, np.inf)
        active = np.ones(rho.size, dtype=bool)
        ratio = shrink**2

        for i in range(1, levels):
            h = h / shrink
            tableau[0, i] = central(h)
            fac = ratio
            for j in range(1, i + 1):
                tableau[j, i] = (tableau[j - 1, i] * fac - tableau[j - 1, i - 1]) / (fac - 1.0)
                fac *= ratio
                estimate = np.maximum(np.abs(tableau[j, i] - tableau[j - 1, i]),
                                      np.abs(tableau[j, i] - tableau[j - 1, i - 1]))
                better = active & (estimate <= err)
                err = np.where(better, estimate, err)
                best = np.where(better, tableau[j, i], best)
            active &= np.abs(tableau[i, i] - tableau[i - 1, i - 1]) < 2.0 * err
            if not np.any(active):
                break
        return best, err

    def check(self, rho: ArrayLike) -> float:
        """Largest identity residual on the samples; raises when above quadrature_tol"""
        worst = float(np.max(self.identity_residual(rho)))
        if worst > self.quadrature_tol:
            raise QuadratureError("pressure potential identity not met", worst)
        return worst


@dataclass(frozen=True)
class BoundViolation:
    rho: float
    kind: str
    value: float
    bound: float


@dataclass
class BoundsReport:
    """Samples violating the pressure-bound pair; empty means conformance"""

    violations: list[BoundViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [vars(v) for v in self.violations],
        }


def check_pressure_bounds(law: PressureLaw, rho_samples) -> BoundsReport:
    """Check p'(rho) >= a1*rho^(gamma-1) - b (rho > 0) and p(rho) <= a2*rho^gamma + b

    Args:
        law: Pressure law with its bound constants
        rho_samples: Nonnegative, nonempty densities

    Returns:
        BoundsReport listing every violating sample
    """
    rho = np.atleast_1d(np.asarray(rho_samples, dtype=float))
    if rho.size == 0 or np.any(rho < 0):
        raise DomainError("bound check needs a nonempty list of nonnegative densities")

    p = np.asarray(pressure(rho, law))
    dp = np.asarray(pressure_derivative(rho, law))
    lower = law.a1 * rho ** (law.gamma - 1.0) - law.b
    upper = law.a2 * rho**law.gamma + law.b
    slack = 1e-12 * np.maximum(1.0, np.abs(upper))

    report = BoundsReport()
    for r, d, lo, pv, up, s in zip(rho, dp, lower, p, upper, slack):
        if r > 0 and d < lo - 1e-12 * max(1.0, abs(lo)):
            report.violations.append(BoundViolation(float(r), "derivative_lower_bound", float(d), float(lo)))
        if pv > up + s:
            report.violations.append(BoundViolation(float(r), "growth_upper_bound", float(pv), float(up)))
    if report.violations:
        logger.info(f"Pressure bounds: {len(report.violations)} violations on {rho.size} samples")
    return report


@dataclass(frozen=True)
class ViscosityPair:
    """Shear viscosity mu > 0 and bulk viscosity >= 0"""

    mu: float = 1.0
    bulk: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError(f"shear viscosity must be positive, got {self.mu}", "viscosity.mu")
        if not self.bulk >= 0:
            raise ConfigurationError(f"bulk viscosity must be nonnegative, got {self.bulk}", "viscosity.bulk")

    def planar_coefficient(self) -> float:
        """Effective coefficient of the 1D planar stress, (4/3)*mu + bulk"""
        return 4.0 * self.mu / 3.0 + self.bulk


def stress(grad_u: np.ndarray, visc: ViscosityPair, N: int) -> np.ndarray:
    """Newtonian viscous stress mu*(grad u + grad u^T - (2/N) div u I) + bulk div u I

    grad_u[..., i, j] = d_j u_i; leading axes are batch axes. For N = 1 the
    planar-flow value (4/3*mu + bulk)*u_x is returned.
    """
    grad_u = np.asarray(grad_u, dtype=float)
    if N not in (1, 2, 3):
        raise ShapeError(f"dimension must be 1, 2 or 3, got {N}")
    if grad_u.ndim < 2 or grad_u.shape[-1] != grad_u.shape[-2]:
        raise ShapeError(f"velocity gradient must be square, got shape {grad_u.shape}")
    if grad_u.shape[-1] != N:
        raise ShapeError(f"velocity gradient is {grad_u.shape[-1]}x{grad_u.shape[-1]}, expected {N}x{N}")

    if N == 1:
        return visc.planar_coefficient() * grad_u

    div = np.trace(grad_u, axis1=-2, axis2=-1)[..., None, None]
    eye = np.eye(N)
    sym = grad_u + np.swapaxes(grad_u, -1, -2)
    return visc.mu * (sym - (2.0 / N) * div * eye) + visc.bulk * div * eye


def kinetic_density(rho: ArrayLike, m: np.ndarray) -> ArrayLike:
    """Convex extension of |m|^2/rho: 0 if m = 0, inf if rho = 0 and m != 0

    m carries its vector components on the last axis.
    """
    rho_arr = np.asarray(rho, dtype=float)
    m_arr = np.asarray(m, dtype=float)
    if np.any(rho_arr < 0):
        raise DomainError("density must be nonnegative")
    m_sq = np.sum(m_arr**2, axis=-1)
    out = np.zeros(np.broadcast(rho_arr, m_sq).shape)
    rho_b = np.broadcast_to(rho_arr, out.shape)
    m_b = np.broadcast_to(m_sq, out.shape)
    pos = rho_b > 0
    out[pos] = m_b[pos] / rho_b[pos]
    out[(~pos) & (m_b > 0)] = math.inf
    if out.ndim == 0:
        return float(out)
    return out


def energy_density(rho: np.ndarray, m: np.ndarray, law: PressureLaw) -> np.ndarray:
    """Cellwise 1/2 |m|^2/rho + P(rho)"""
    return 0.5 * np.asarray(kinetic_density(rho, m)) + np.asarray(pressure_potential(rho, law))


def total_energy(rho: "ScalarField", m: "VectorField", law: PressureLaw) -> float:
    """Total energy of the fields by cell-centered quadrature; inf for vacuum with momentum"""
    if rho.grid != m.grid:
        raise ShapeError("density and momentum live on different grids")
    density = energy_density(rho.values, m.values, law)
    if np.any(np.isinf(density)):
        return math.inf
    return rho.grid.integrate(density)
