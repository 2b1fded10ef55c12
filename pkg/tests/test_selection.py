"""Tests for Laplace functionals, the selection cascade and semigroup checks"""

import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import energy_trajectory, rest_data
from src.components.errors import DomainError, EmptySetError, GeneratorError, ShapeError
from src.components.physics import PressureLaw, total_energy
from src.components.selection import (
    STEP,
    LaplaceFunctional,
    MonotoneWrapper,
    SelectionSchedule,
    Selector,
    admissible_filter,
    cascade,
    diagonal_enumeration,
    full_measure_times,
    functional_F_energy,
    functional_F_momentum,
    is_admissible,
    laplace_functional,
    laplace_transform,
    minimize_step,
    precedes,
    restricted_selection_V,
    restricted_semigroup_check,
    semigroup_check,
    semigroup_sweep,
    stern_brocot,
)
from src.components.state import Grid, InitialData, ScalarField, VectorField
from src.components.systems import FunnelSystem, funnel_grid, funnel_state, toy_funnel_solutions
from src.components.trajectory import (
    EnergySignal,
    Trajectory,
    TrajectorySet,
    continue_at,
    hausdorff,
    q_distance,
    shift,
)

GRID = Grid((1.0,), (16,))
BRANCHES = [0.0, 0.25, 0.5, 0.75, 1.0]
HORIZON = 1.5
DT = 0.05


def member(level: float, amplitude: float, traj_id: str, steps: int = 10, dt: float = 0.1) -> Trajectory:
    """Rest density, momentum growing as amplitude * t * sin(pi x), energy dropping to `level`"""
    x = GRID.centers(0)
    t = dt * np.arange(steps + 1)
    m = (amplitude * t[:, None] * np.sin(np.pi * x)[None, :])[..., None]
    energies = np.concatenate([[1.0], np.full(steps, level)])
    return energy_trajectory(GRID, energies, traj_id, dt, left_values=np.concatenate([[1.0], energies[:-1]]), m=m)


def start_data() -> InitialData:
    return InitialData(ScalarField.constant(GRID, 1.0), VectorField.zeros(GRID), 1.0)


def schedule(**kwargs) -> SelectionSchedule:
    kwargs.setdefault("rate_count", 3)
    kwargs.setdefault("basis_size", 2)
    return SelectionSchedule.build(GRID, 1.0, **kwargs)


def funnel_schedule() -> SelectionSchedule:
    return SelectionSchedule.build(funnel_grid(), 1.0, rate_count=4, basis_size=4)


# ------------------------------------------------------------------
# Functionals
# ------------------------------------------------------------------

def test_laplace_transform_of_constant_step():
    t = np.linspace(0.0, 2.0, 21)
    value = laplace_transform(t, np.ones_like(t), 1.5, kind=STEP)
    assert value.value == pytest.approx((1.0 - math.exp(-3.0)) / 1.5, rel=1e-12)
    assert value.tail_bound == pytest.approx(math.exp(-3.0) / 1.5)


def test_laplace_transform_sampled_is_trapezoid():
    t = np.linspace(0.0, 1.0, 201)
    value = laplace_transform(t, t, 2.0).value
    exact = (1.0 - 3.0 * math.exp(-2.0)) / 4.0
    assert value == pytest.approx(exact, rel=1e-4)


def test_laplace_rate_must_be_positive():
    with pytest.raises(DomainError):
        laplace_transform(np.array([0.0, 1.0]), np.ones(2), 0.0)
    with pytest.raises(DomainError):
        MonotoneWrapper(scale=0.0)


def test_wrapper_is_bounded_and_increasing():
    alpha = MonotoneWrapper(scale=2.0)
    # strict increase inside the unsaturated range |x| <= 8*scale
    x = np.linspace(-16.0, 16.0, 101)
    y = alpha(x)
    assert np.all(np.diff(y) > 0) and np.all(np.abs(y) < 1.0)
    wide = alpha(np.linspace(-500.0, 500.0, 101))
    assert np.all(np.abs(wide) <= 1.0) and np.all(np.diff(wide) >= 0)


def test_energy_functional_prefers_lower_energy():
    alpha = MonotoneWrapper()
    low, high = member(0.5, 0.0, "low"), member(0.9, 0.0, "high")
    F = functional_F_energy(alpha)
    assert laplace_functional(low, 1.0, F).value < laplace_functional(high, 1.0, F).value


def test_momentum_functional_checks_shape():
    F = functional_F_momentum(MonotoneWrapper(), np.zeros((8, 1)))
    with pytest.raises(ShapeError):
        F.samples(member(0.5, 1.0, "q"))


def test_stern_brocot_order():
    assert stern_brocot(7) == [Fraction(1), Fraction(1, 2), Fraction(2), Fraction(1, 3),
                               Fraction(2, 3), Fraction(3, 2), Fraction(3)]
    assert len(set(stern_brocot(50))) == 50


def test_diagonal_enumeration():
    assert diagonal_enumeration(2, 1) == [(1, 0), (2, 0), (1, 1), (2, 1)]
    assert len(diagonal_enumeration(4, 3)) == 16


def test_schedule_validation():
    sched = schedule()
    assert sched.validate()[0]
    assert sched.stages == 3 * 3
    sched.enumeration.append((9, 0))
    ok, errors = sched.validate()
    assert not ok and any("(9, 0)" in e for e in errors)


# ------------------------------------------------------------------
# Cascade
# ------------------------------------------------------------------

def lexicographic_oracle(members, sched):
    functionals = [sched.admissibility_functional()] + sched.functionals()
    return min(members, key=lambda q: tuple(f(q) for f in functionals))


def random_members(rng, size: int):
    amplitudes = rng.choice(np.arange(-10, 11) * 0.1, size=size, replace=False)
    levels = rng.choice([0.9, 0.8], size=size)
    return [member(level, a, f"q{i:02d}") for i, (level, a) in enumerate(zip(levels, amplitudes))]


def test_cascade_matches_lexicographic_oracle(rng):
    sched = schedule()
    for _ in range(50):
        members = random_members(rng, int(rng.integers(2, 21)))
        chosen, trace = cascade(TrajectorySet(start_data(), members), sched)
        assert chosen.id == lexicographic_oracle(members, sched).id
        assert trace.is_nested()
        assert not trace.incomplete


def test_cascade_singleton_and_empty():
    only = member(0.5, 0.0, "only")
    chosen, trace = cascade(TrajectorySet(start_data(), [only]), schedule())
    assert chosen is only and trace.stages == []
    with pytest.raises(EmptySetError):
        cascade(TrajectorySet(start_data()), schedule())
    with pytest.raises(EmptySetError):
        minimize_step(TrajectorySet(start_data()), lambda q: 0.0)


def test_unresolved_tie_is_flagged():
    members = [member(0.8, 0.4, "b"), member(0.8, -0.4, "a")]
    chosen, trace = cascade(TrajectorySet(start_data(), members), schedule(stages=0))
    assert trace.incomplete and chosen.id == "a"
    assert trace.to_dict()["selection_incomplete"] is True


def test_duplicates_collapse_to_smallest_id():
    members = [member(0.8, 0.4, "b"), member(0.8, 0.4, "a")]
    chosen, trace = cascade(TrajectorySet(start_data(), members), schedule())
    assert chosen.id == "a" and trace.deduplicated == ["b"]
    assert not trace.incomplete


def test_collapse_needs_the_whole_set_within_delta_dup():
    members = TrajectorySet(start_data(), [member(0.8, 0.0, "a"), member(0.8, 1e-3, "b"), member(0.8, -1e-3, "c")])
    spread = q_distance(members[1], members[2])
    assert q_distance(members[0], members[1]) < 0.75 * spread
    assert members.diameter() == pytest.approx(spread)
    chosen, trace = cascade(members, schedule(delta_dup=0.75 * spread))
    assert trace.deduplicated == [] and trace.stages
    assert chosen.id in ("b", "c") and not trace.incomplete


def test_members_differing_only_in_density_stay_unresolved():
    x = GRID.centers(0)
    t = 0.1 * np.arange(11)
    energies = np.concatenate([[1.0], np.full(10, 0.8)])
    members = []
    for traj_id, amplitude in (("b", 0.1), ("a", 0.2)):
        rho = 1.0 + amplitude * t[:, None] * np.cos(2.0 * np.pi * x)[None, :]
        members.append(energy_trajectory(GRID, energies, traj_id, rho=rho))
    sched = schedule()
    chosen, trace = cascade(TrajectorySet(start_data(), members), sched)
    assert chosen.id == "a" and trace.incomplete
    assert len(trace.stages) == sched.stages + 1
    assert trace.deduplicated == []
    assert all(r.survivors == ["a", "b"] for r in trace.stages)


def test_minimize_step_keeps_values_within_tie_tolerance():
    eps_tie = 1e-9
    values = {"a": 0.30, "b": 0.30 + eps_tie / 2, "c": 0.9}
    members = TrajectorySet(start_data(), [member(0.8, 0.1 * i, traj_id) for i, traj_id in enumerate(values)])
    survivors = minimize_step(members, lambda q: values[q.id], eps_tie)
    assert survivors.ids == ["a", "b"]


def warp(x):
    return 2.0 * x + x**3


def test_increasing_reparameterization_keeps_survivors():
    members = TrajectorySet(start_data(), [
        member(0.5, 0.3, "a"), member(0.5, -0.1, "b"), member(0.7, 0.6, "c"), member(0.9, -0.5, "d"),
    ])
    e1 = schedule().basis[0]
    for observable in (functional_F_energy, lambda w: functional_F_momentum(w, e1)):
        plain = LaplaceFunctional(1.0, observable(MonotoneWrapper()))
        warped = LaplaceFunctional(1.0, observable(MonotoneWrapper(inner=warp)))
        assert minimize_step(members, plain).ids == minimize_step(members, warped).ids
    assert minimize_step(members, LaplaceFunctional(1.0, functional_F_energy(MonotoneWrapper()))).ids == ["a", "b"]

    sched = schedule()
    warped_sched = dataclasses.replace(
        sched,
        energy_wrapper=MonotoneWrapper(sched.energy_wrapper.scale, inner=warp),
        momentum_wrapper=MonotoneWrapper(sched.momentum_wrapper.scale, inner=warp),
    )
    chosen, trace = cascade(members, sched)
    warped_chosen, warped_trace = cascade(members, warped_sched)
    assert warped_chosen.id == chosen.id
    assert [r.survivors for r in warped_trace.stages] == [r.survivors for r in trace.stages]


@pytest.mark.parametrize("delta", [1e-3, 1e-4, 1e-5])
def test_selection_is_stable_under_small_perturbations(rng, delta):
    sched = schedule()
    members = random_members(rng, 5)
    reference = cascade(TrajectorySet(start_data(), members), sched)[0].id
    perturbed = []
    for q in members:
        noise = delta * rng.uniform(-1.0, 1.0, size=q.m.shape)
        noise[0] = 0.0
        perturbed.append(Trajectory(q.grid, q.dt, q.rho, q.m + noise, q.energy, q.id))
    assert cascade(TrajectorySet(start_data(), perturbed), sched)[0].id == reference


def test_survivor_displacement_shrinks_with_perturbation(rng):
    sched = schedule()
    members = random_members(rng, 8)
    _, trace = cascade(TrajectorySet(start_data(), members), sched)
    final = trace.stages[-1].survivors
    patterns = []
    for q in members:
        noise = rng.uniform(-1.0, 1.0, size=q.m.shape)
        noise[0] = 0.0
        patterns.append(noise)

    displacements = []
    for delta in (1e-3, 1e-4, 1e-5):
        perturbed = [Trajectory(q.grid, q.dt, q.rho, q.m + delta * p, q.energy, q.id)
                     for q, p in zip(members, patterns)]
        _, perturbed_trace = cascade(TrajectorySet(start_data(), perturbed), sched)
        assert perturbed_trace.stages[-1].survivors == final
        before = [q for q in members if q.id in final]
        after = [q for q in perturbed if q.id in final]
        displacements.append(hausdorff(before, after))
    assert displacements[0] > displacements[1] > displacements[2] > 0.0


def test_selection_is_deterministic(rng):
    sched = schedule()
    members = random_members(rng, 5)
    first = cascade(TrajectorySet(start_data(), members), sched)
    second = cascade(TrajectorySet(start_data(), members), sched)
    assert first[0].id == second[0].id
    assert first[1].to_json() == second[1].to_json()
    reordered = cascade(TrajectorySet(start_data(), members[::-1]), sched)
    assert reordered[0].id == first[0].id


def test_selector_keeps_last_trace():
    selector = Selector(schedule())
    chosen = selector(TrajectorySet(start_data(), [member(0.8, 0.2, "a"), member(0.9, 0.2, "b")]))
    assert chosen.id == "a"
    assert selector.last_trace.selected_id == "a"
    assert selector.last_trace.stages[0].label == "admissibility"


# ------------------------------------------------------------------
# Admissibility on the funnel
# ------------------------------------------------------------------

def test_funnel_selects_earliest_branch():
    members = toy_funnel_solutions(BRANCHES, HORIZON, DT)
    chosen, trace = cascade(members, funnel_schedule())
    assert chosen.id == "funnel-c0.0000"
    assert is_admissible(chosen, list(members))
    for q in members:
        if q is chosen:
            continue
        assert not is_admissible(q, list(members))
        assert precedes(chosen, q)
        assert q.energy.values[-1] > chosen.energy.values[-1]


def test_admissible_filter_on_funnel():
    members = toy_funnel_solutions(BRANCHES, HORIZON, DT)
    survivors = admissible_filter(members, MonotoneWrapper.for_energy(1.0))
    assert survivors.ids == ["funnel-c0.0000"]


# ------------------------------------------------------------------
# Semigroup
# ------------------------------------------------------------------

@pytest.mark.parametrize("t1", [0.0, 0.1, 0.25, 0.4, 0.5])
def test_funnel_semigroup(t1):
    system = FunnelSystem(BRANCHES, HORIZON, DT)
    data = toy_funnel_solutions(BRANCHES, HORIZON, DT).data
    selector = Selector(funnel_schedule())
    pairs = [(t1, t2) for t2 in (0.1, 0.25, 0.4, 0.5, 0.75)]
    records = semigroup_sweep(selector, system, data, pairs, tolerance=1e-8)
    assert all(r.passed for r in records)
    assert max(r.deviation for r in records) <= 1e-8


def test_semigroup_window_beyond_horizon():
    system = FunnelSystem(BRANCHES, HORIZON, DT)
    data = toy_funnel_solutions(BRANCHES, HORIZON, DT).data
    with pytest.raises(DomainError):
        semigroup_check(Selector(funnel_schedule()), system, data, 1.0, 1.0)


def funnel_start(branches=BRANCHES):
    system = FunnelSystem(branches, HORIZON, DT)
    return system, toy_funnel_solutions(branches, HORIZON, DT).data


def truncated(q: Trajectory, samples: int) -> Trajectory:
    e = q.energy
    signal = EnergySignal(e.times[:samples], e.values[:samples], e.left_values[:samples])
    return Trajectory(q.grid, q.dt, q.rho[:samples], q.m[:samples], signal, q.id)


@pytest.mark.parametrize("T", [0.25, 0.5, 1.0])
def test_shift_of_selection_is_selection_of_restart(T):
    system, data = funnel_start()
    sched = funnel_schedule()
    selector = Selector(sched)
    chosen = selector(system(data))
    restarted = selector(system(chosen.evaluate(T).as_initial_data()))
    assert q_distance(shift(chosen, T), restarted) <= sched.delta_dup


def test_splice_with_restarted_selection_keeps_functional_values():
    system, data = funnel_start()
    sched = funnel_schedule()
    selector = Selector(sched)
    chosen = selector(system(data))
    T = 0.5
    restarted = selector(system(chosen.evaluate(T).as_initial_data()))
    spliced = truncated(continue_at(chosen, restarted, T), chosen.steps + 1)
    functionals = [sched.admissibility_functional()] + sched.functionals()
    assert np.allclose([f(spliced) for f in functionals], [f(chosen) for f in functionals], rtol=1e-10, atol=1e-12)


def test_semigroup_flags_generator_that_drops_selected_branch():
    system, data = funnel_start()
    calls = []

    def forgetful(d: InitialData) -> TrajectorySet:
        members = system(d)
        calls.append(d)
        if len(calls) == 1:
            return members
        return members.subset([q for q in members if q.id != "funnel-c0.0000"])

    deviation = semigroup_check(Selector(funnel_schedule()), forgetful, data, 0.0, 0.5)
    assert deviation > 1e-6
    calls.clear()
    records = semigroup_sweep(Selector(funnel_schedule()), forgetful, data, [(0.0, 0.5)], tolerance=1e-8)
    assert records[0].passed is False


def test_funnel_restart_from_rest_before_branching():
    late = [0.25, 0.5, 0.75, 1.0]
    system, data = funnel_start(late)
    selector = Selector(funnel_schedule())
    chosen = selector(system(data))
    assert chosen.id == "funnel-c0.2500"

    # still at rest at t1 = 0.1, so the restart faces the whole funnel again and branches later
    restart = chosen.evaluate(0.1).as_initial_data()
    assert funnel_state(restart) == 0.0 and len(system(restart)) == len(late) + 1
    assert semigroup_check(selector, system, data, 0.1, 0.5) > 1e-6

    # after leaving rest the restart is unique and consistent
    records = semigroup_sweep(selector, system, data, [(0.3, 0.5), (0.5, 0.75)], tolerance=1e-8)
    assert all(r.passed for r in records)


def test_generator_failures_are_wrapped():
    data = start_data()
    selector = Selector(schedule())

    def broken(_):
        raise RuntimeError("solver exploded")

    with pytest.raises(GeneratorError):
        semigroup_check(selector, broken, data, 0.0, 0.1)
    with pytest.raises(GeneratorError):
        semigroup_check(selector, lambda d: TrajectorySet(d), data, 0.0, 0.1)


# ------------------------------------------------------------------
# Restricted selection
# ------------------------------------------------------------------

def decaying_system(law: PressureLaw, original: np.ndarray, inject: int = 3):
    """m(t) = m0 exp(-t) with the field energy stored; a held-over energy value at `inject` on the original data"""

    def system(data: InitialData) -> TrajectorySet:
        t = 0.1 * np.arange(11)
        rho = np.broadcast_to(data.rho0.values, (11,) + GRID.shape)
        m = data.m0.values[None] * np.exp(-t)[:, None, None]
        energies = np.array([
            total_energy(ScalarField(GRID, rho[k]), VectorField(GRID, m[k]), law) for k in range(11)
        ])
        if np.array_equal(data.m0.values, original):
            energies[inject] = energies[inject - 1]
        signal = EnergySignal(t, energies, np.concatenate([[data.E0], energies[:-1]]))
        return TrajectorySet(data, [Trajectory(GRID, 0.1, rho, m, signal, "decay")])

    return system


def decaying_start():
    m0 = (0.5 * np.sin(np.pi * GRID.centers(0)))[:, None]
    return ScalarField.constant(GRID, 1.0), VectorField(GRID, m0)


def test_restricted_selection_fixes_field_energy(law):
    rho0, m0 = decaying_start()
    selected = restricted_selection_V(rho0, m0, Selector(schedule()), decaying_system(law, m0.values), law)
    assert selected.energy.initial_slot == pytest.approx(total_energy(rho0, m0, law))


def test_restricted_semigroup_on_stationary_state(law):
    data = rest_data(GRID, law)

    def stationary(d: InitialData) -> TrajectorySet:
        return TrajectorySet(d, [Trajectory.constant(d, 0.1, 10, "rest")])

    pairs = [(t1, t2) for t1 in (0.0, 0.2, 0.5) for t2 in (0.1, 0.4)]
    records, report = restricted_semigroup_check(Selector(schedule()), stationary, data.rho0, data.m0, law, pairs)
    assert report.consistent and report.excluded == []
    assert all(r.status == "checked" and r.passed for r in records)
    assert max(r.deviation for r in records) <= 1e-12


def test_restricted_semigroup_skips_excluded_times(law):
    rho0, m0 = decaying_start()
    system = decaying_system(law, m0.values)
    pairs = [(0.1, 0.1), (0.3, 0.2), (0.1, 0.3), (0.5, 0.2)]
    records, report = restricted_semigroup_check(Selector(schedule()), system, rho0, m0, law, pairs)
    assert report.excluded == pytest.approx([0.3])
    assert report.consistent
    status = {(r.t1, r.t2): r.status for r in records}
    assert status[(0.3, 0.2)] == "out_of_T" and status[(0.1, 0.3)] == "out_of_T"
    checked = [r for r in records if r.status == "checked"]
    assert len(checked) == 2 and all(r.passed for r in checked)
    assert all(r.passed is None for r in records if r.status == "out_of_T")


def test_full_measure_detects_energy_below_fields(law):
    q = energy_trajectory(GRID, np.full(5, 0.5), "low")
    report = full_measure_times(q, law)
    assert not report.consistent
    assert report.times == [] and len(report.excluded) == 5
    assert report.to_dict()["eta"] == 1e-8
