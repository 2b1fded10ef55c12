"""Tests for pressure laws, the pressure potential, stress and energy"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.components.catalog import Catalog
from src.components.errors import ConfigurationError, DomainError, QuadratureError, ShapeError
from src.components.physics import (
    PressureLaw,
    PressurePotential,
    ViscosityPair,
    check_pressure_bounds,
    kinetic_density,
    pressure,
    pressure_derivative,
    pressure_potential,
    pressure_potential_derivative,
    stress,
    total_energy,
)
from src.components.state import Grid, ScalarField, VectorField


def test_gamma_two_potential_examples():
    law = PressureLaw(a=1.0, gamma=2.0)
    assert pressure_potential(2.0, law) == pytest.approx(4.0)
    assert pressure_potential(0.0, law) == 0.0
    assert pressure(3.0, law) == pytest.approx(9.0)


@pytest.mark.parametrize("gamma", [1.5, 2.0, 3.0])
def test_potential_identity_gamma_law(gamma):
    law = PressureLaw(a=1.0, gamma=gamma)
    rho = np.linspace(0.01, 5.0, 200)
    residual = PressurePotential(law).identity_residual(rho)
    assert np.max(residual) <= 1e-10
    exact = rho * pressure_potential_derivative(rho, law) - pressure_potential(rho, law)
    assert np.allclose(exact, pressure(rho, law), rtol=1e-12, atol=0)


def test_potential_identity_tabulated_wiggle():
    law = Catalog.law("wiggle")
    # midpoints between table knots keep the difference stencil inside one cubic
    spacing = law.table[0][1]
    rho = (np.arange(20, 420, 2) + 0.5) * spacing
    assert rho.size == 200
    assert PressurePotential(law).check(rho) <= 1e-10
    exact = rho * pressure_potential_derivative(rho, law) - pressure_potential(rho, law)
    assert np.allclose(exact, pressure(rho, law), rtol=1e-10, atol=1e-14)


def test_potential_identity_where_wiggle_pressure_turns():
    law = Catalog.law("wiggle")
    spacing = law.table[0][1]
    rho = (np.arange(20, 580) + 0.25) * spacing
    turning = rho[np.abs(np.asarray(pressure_derivative(rho, law))) < 0.5]
    assert turning.size >= 5
    potential = PressurePotential(law)
    assert potential.check(turning) <= 1e-10
    dP, err = potential.derivative_estimate(turning)
    assert np.allclose(dP, pressure_potential_derivative(turning, law), rtol=1e-10, atol=0)
    assert np.all(err < 1e-9)


def test_tabulated_potential_is_continuous_at_knots():
    law = Catalog.law("wiggle")
    knots = law.table[0][1:-1]
    at = np.asarray(pressure_potential(knots, law))
    left = np.asarray(pressure_potential(knots * (1.0 - 1e-13), law))
    assert np.allclose(left, at, rtol=1e-9, atol=1e-15)


def test_difference_step_stays_inside_one_piece():
    law = Catalog.law("wiggle")
    spacing = law.table[0][1]
    rho = np.array([10.5, 100.25, 599.5]) * spacing
    h = PressurePotential(law).initial_step(rho)
    assert np.all(h < 0.5 * spacing)
    with pytest.raises(DomainError):
        PressurePotential(law).initial_step(np.array([3.0]))


def test_tabulated_quadratic_matches_gamma_law():
    rho = np.linspace(0.0, 3.0, 601)
    table = PressureLaw(kind="custom_tabulated", table=(rho, rho**2))
    gamma = PressureLaw()
    samples = np.linspace(0.5, 2.9, 50)
    assert np.allclose(pressure_potential(samples, table), pressure_potential(samples, gamma), rtol=1e-2)


def test_wiggle_law_is_not_monotone():
    law = Catalog.law("wiggle")
    rho = np.linspace(0.1, 3.0, 300)
    assert np.any(np.asarray(pressure_derivative(rho, law)) < 0)


def test_check_raises_on_bad_tolerance():
    with pytest.raises(QuadratureError):
        PressurePotential(PressureLaw(), quadrature_tol=-1.0).check(np.array([1.0, 2.0]))


def test_negative_density_is_rejected():
    with pytest.raises(DomainError):
        pressure(-1.0, PressureLaw())
    with pytest.raises(DomainError):
        pressure_potential(np.array([1.0, -0.5]), PressureLaw())


def test_tabulated_range_is_enforced():
    law = Catalog.law("wiggle")
    with pytest.raises(DomainError):
        pressure(4.0, law)


def test_invalid_laws():
    with pytest.raises(ConfigurationError):
        PressureLaw(gamma=0.9)
    with pytest.raises(ConfigurationError):
        PressureLaw(gamma=1.2, dimension=3)
    with pytest.raises(ConfigurationError):
        PressureLaw(kind="custom_tabulated", table=(np.array([0.0, 1.0, 0.5]), np.array([0.0, 1.0, 2.0])))
    with pytest.raises(ConfigurationError):
        PressureLaw(kind="custom_tabulated")


def test_pressure_bounds_gamma_law_conforms():
    law = PressureLaw(a=1.0, gamma=2.0, a1=1.0, a2=1.0, b=0.0)
    report = check_pressure_bounds(law, [0.0, 1.0, 2.0, 10.0])
    assert report.ok
    assert report.to_dict()["violations"] == []


def test_pressure_bounds_reports_violation():
    law = PressureLaw(a=1.0, gamma=2.0, a1=1.0, a2=0.5, b=0.0)
    report = check_pressure_bounds(law, [1.0, 2.0])
    assert not report.ok
    assert {v.kind for v in report.violations} == {"growth_upper_bound"}
    assert [v.rho for v in report.violations] == [1.0, 2.0]


def test_pressure_bounds_empty_samples():
    with pytest.raises(DomainError):
        check_pressure_bounds(PressureLaw(), [])


def test_stress_examples_2d():
    visc = ViscosityPair(mu=1.0, bulk=0.0)
    shear = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert np.allclose(stress(shear, visc, 2), [[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(stress(np.zeros((2, 2)), visc, 2), 0.0)
    expansion = np.eye(2)
    assert np.allclose(stress(expansion, visc, 2), 0.0)
    assert np.allclose(stress(expansion, ViscosityPair(1.0, 0.5), 2), np.eye(2))


def test_stress_planar_1d():
    visc = ViscosityPair(mu=0.3, bulk=0.1)
    assert stress(np.array([[2.0]]), visc, 1)[0, 0] == pytest.approx(2.0 * (0.4 + 0.1))


def test_stress_shape_errors():
    with pytest.raises(ShapeError):
        stress(np.zeros((2, 3)), ViscosityPair(), 2)
    with pytest.raises(ShapeError):
        stress(np.zeros((3, 3)), ViscosityPair(), 2)


def test_viscosity_validation():
    with pytest.raises(ConfigurationError):
        ViscosityPair(mu=0.0)
    with pytest.raises(ConfigurationError):
        ViscosityPair(mu=1.0, bulk=-1.0)


matrices = st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4).map(
    lambda v: np.array(v).reshape(2, 2)
)


@settings(max_examples=50, deadline=None)
@given(matrices, matrices, st.floats(-5, 5, allow_nan=False))
def test_stress_is_linear(a, b, scale):
    visc = ViscosityPair(mu=0.7, bulk=0.2)
    lhs = stress(a + scale * b, visc, 2)
    rhs = stress(a, visc, 2) + scale * stress(b, visc, 2)
    assert np.allclose(lhs, rhs, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(matrices)
def test_stress_dissipation_is_nonnegative(grad):
    visc = ViscosityPair(mu=0.7, bulk=0.2)
    assert np.sum(stress(grad, visc, 2) * grad) >= -1e-9


def test_kinetic_density_vacuum():
    assert kinetic_density(0.0, np.array([0.0])) == 0.0
    assert kinetic_density(0.0, np.array([1.0])) == math.inf
    assert kinetic_density(2.0, np.array([2.0])) == pytest.approx(2.0)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.01, 10), st.floats(-10, 10, allow_nan=False),
    st.floats(0.01, 10), st.floats(-10, 10, allow_nan=False),
    st.floats(0, 1),
)
def test_kinetic_density_is_convex(r1, m1, r2, m2, t):
    mid = kinetic_density(t * r1 + (1 - t) * r2, np.array([t * m1 + (1 - t) * m2]))
    ends = t * kinetic_density(r1, np.array([m1])) + (1 - t) * kinetic_density(r2, np.array([m2]))
    assert mid <= ends + 1e-9 * max(1.0, ends)


def test_total_energy_of_rest_state():
    grid = Grid((1.0,), (16,))
    rho = ScalarField.constant(grid, 2.0)
    assert total_energy(rho, VectorField.zeros(grid), PressureLaw()) == pytest.approx(4.0)


def test_total_energy_vacuum_with_momentum_is_infinite():
    grid = Grid((1.0,), (8,))
    rho = np.ones(8)
    rho[3] = 0.0
    m = np.zeros((8, 1))
    m[3, 0] = 1.0
    assert total_energy(ScalarField(grid, rho), VectorField(grid, m), PressureLaw()) == math.inf
