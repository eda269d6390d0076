"""Contact surfaces, disturbance pulses, and commanded-pose schedules."""

import numpy as np
import pytest

from vicopt.dynamics import PlantState
from vicopt.environment import (
    ContactSurface,
    DisturbanceProfile,
    DisturbanceSegment,
    ReferenceSchedule,
    disturbance_at,
    environment_force,
    reference_at,
    surface_force,
)


def _state(e0, ed0=0.0, axis=0):
    e = np.zeros(6)
    ed = np.zeros(6)
    e[axis] = e0
    ed[axis] = ed0
    return PlantState(e, ed)


def test_surface_force_known_value():
    """Spring at 1.0 with k=1e4 and penetration above: e=1.01 -> F = -100 N."""
    surf = ContactSurface(axis=0, location=1.0, stiffness=1e4, penetration_sign=+1)
    f = surface_force(_state(1.01), surf)
    assert f[0] == pytest.approx(-100.0, abs=1e-12)
    assert np.all(f[1:] == 0.0)


def test_surface_is_one_sided():
    surf = ContactSurface(axis=0, location=1.0, stiffness=1e4, penetration_sign=+1)
    assert np.all(surface_force(_state(0.99), surf) == 0.0)
    assert np.all(surface_force(_state(1.0), surf) == 0.0)  # exact contact: not engaged
    assert surface_force(_state(1.001), surf)[0] < 0.0


def test_surface_sign_mirrors():
    """penetration_sign=-1 engages below the surface and pushes back up."""
    surf = ContactSurface(axis=0, location=1.0, stiffness=2e3, penetration_sign=-1)
    assert np.all(surface_force(_state(1.01), surf) == 0.0)
    f = surface_force(_state(0.9), surf)
    assert f[0] == pytest.approx(2e3 * 0.1)


def test_surface_damping_only_while_engaged():
    surf = ContactSurface(axis=0, location=0.0, stiffness=100.0, damping=5.0, penetration_sign=+1)
    engaged = surface_force(_state(0.01, ed0=2.0), surf)
    assert engaged[0] == pytest.approx(-100.0 * 0.01 - 5.0 * 2.0)
    free = surface_force(_state(-0.01, ed0=2.0), surf)
    assert np.all(free == 0.0)


def test_surface_validation():
    with pytest.raises(ValueError):
        ContactSurface(axis=7, location=0.0, stiffness=1.0)
    with pytest.raises(ValueError):
        ContactSurface(axis=0, location=0.0, stiffness=-1.0)
    with pytest.raises(ValueError):
        ContactSurface(axis=0, location=0.0, stiffness=1.0, penetration_sign=0)


def test_disturbance_half_open_interval():
    seg = DisturbanceSegment(1.0, 2.0, np.array([3.0, 0, 0, 0, 0, 0]))
    profile = DisturbanceProfile(segments=[seg])
    assert disturbance_at(profile, 0.999)[0] == 0.0
    assert disturbance_at(profile, 1.0)[0] == 3.0
    assert disturbance_at(profile, 1.999)[0] == 3.0
    assert disturbance_at(profile, 2.0)[0] == 0.0


def test_disturbance_overlaps_add():
    segs = [
        DisturbanceSegment(0.0, 2.0, np.array([1.0, 0, 0, 0, 0, 0])),
        DisturbanceSegment(1.0, 3.0, np.array([2.0, 0, 0, 0, 0, 0])),
    ]
    profile = DisturbanceProfile(segments=segs)
    assert disturbance_at(profile, 0.5)[0] == 1.0
    assert disturbance_at(profile, 1.5)[0] == 3.0
    assert disturbance_at(profile, 2.5)[0] == 2.0
    assert disturbance_at(None, 1.0) is not None
    assert np.all(disturbance_at(None, 1.0) == 0.0)


def test_random_disturbance_reproducible_and_in_range():
    for seed in range(10):
        p1 = DisturbanceProfile.from_random(seed=seed, count=5, t_range=(0.0, 4.0), duration=(0.2, 0.5), magnitude=(5.0, 10.0), axes=(0, 2))
        p2 = DisturbanceProfile.from_random(seed=seed, count=5, t_range=(0.0, 4.0), duration=(0.2, 0.5), magnitude=(5.0, 10.0), axes=(0, 2))
        assert len(p1.segments) == 5
        for s1, s2 in zip(p1.segments, p2.segments):
            assert s1.t_start == s2.t_start and s1.t_end == s2.t_end
            np.testing.assert_array_equal(s1.wrench, s2.wrench)
            assert 0.0 <= s1.t_start <= 4.0
            assert 0.2 - 1e-12 <= s1.t_end - s1.t_start <= 0.5 + 1e-12
            nz = np.nonzero(s1.wrench)[0]
            assert len(nz) == 1 and nz[0] in (0, 2)
            assert 5.0 <= abs(s1.wrench[nz[0]]) <= 10.0


def test_reference_hold_interpolation():
    sched = ReferenceSchedule(
        times=np.array([0.0, 1.0, 2.0]),
        points=np.array([[0.0] * 6, [1.0] + [0.0] * 5, [3.0] + [0.0] * 5]),
        interpolation="hold",
    )
    assert reference_at(sched, -0.5)[0] == 0.0
    assert reference_at(sched, 0.5)[0] == 0.0
    assert reference_at(sched, 1.0)[0] == 1.0
    assert reference_at(sched, 1.999)[0] == 1.0
    assert reference_at(sched, 5.0)[0] == 3.0


def test_reference_linear_interpolation():
    sched = ReferenceSchedule(
        times=np.array([0.0, 2.0]),
        points=np.array([[0.0] * 6, [4.0] + [0.0] * 5]),
        interpolation="linear",
    )
    assert reference_at(sched, 0.5)[0] == pytest.approx(1.0)
    assert reference_at(sched, 1.5)[0] == pytest.approx(3.0)
    assert reference_at(sched, 3.0)[0] == pytest.approx(4.0)


def test_reference_times_must_increase():
    with pytest.raises(ValueError):
        ReferenceSchedule(times=np.array([0.0, 0.0]), points=np.zeros((2, 6)), interpolation="hold")


def test_environment_force_combines_sources():
    surf = ContactSurface(axis=0, location=0.0, stiffness=100.0, penetration_sign=+1)
    profile = DisturbanceProfile(segments=[DisturbanceSegment(0.0, 1.0, np.array([0, 7.0, 0, 0, 0, 0]))])
    state = _state(0.5)
    f = environment_force(state, 0.5, surfaces=(surf,), disturbance=profile)
    assert f[0] == pytest.approx(-50.0)
    assert f[1] == pytest.approx(7.0)
    assert np.all(f[2:] == 0.0)
