"""Simulated environment: contact surfaces, disturbances, reference motion.

Surfaces are one-sided Kelvin-Voigt springs pinned to a single axis of
the error coordinate.  Disturbance profiles are piecewise-constant
wrenches, either listed explicitly or drawn from a seeded generator.
Reference schedules describe motion of the commanded pose; the plant is
simulated in error coordinates, so reference changes enter as shifts of e.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import N_AXES, PlantState


@dataclass
class ContactSurface:
    """One-sided spring surface along one error axis.

    ``penetration_sign`` selects the side on which contact engages:
    penetration depth is ``penetration_sign * (e[axis] - location)`` and
    the surface pushes back only while that depth is strictly positive.
    Exactly at the surface the force is zero (one-sided contact).
    """

    axis: int
    location: float
    stiffness: float
    damping: float = 0.0
    penetration_sign: int = -1

    def __post_init__(self):
        if not 0 <= self.axis < N_AXES:
            raise ValueError(f"axis must be in [0, {N_AXES}), got {self.axis}")
        if self.stiffness <= 0:
            raise ValueError("stiffness must be positive")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        if self.penetration_sign not in (-1, 1):
            raise ValueError("penetration_sign must be -1 or +1")


def surface_force(state: PlantState, surface: ContactSurface) -> np.ndarray:
    """Wrench exerted by a spring surface at the given state.

    Zero everywhere except on the surface axis while penetrating:

        F[axis] = -sign * stiffness * depth - damping * e_dot[axis],
        depth   = sign * (e[axis] - location) > 0.
    """
    f = np.zeros(N_AXES)
    i = surface.axis
    depth = surface.penetration_sign * (state.e[i] - surface.location)
    if depth > 0.0:
        f[i] = (
            -surface.penetration_sign * surface.stiffness * depth
            - surface.damping * state.e_dot[i]
        )
    return f


def surface_force_scalar(e_i: float, ed_i: float, surface: ContactSurface) -> float:
    """Axis-local version of ``surface_force`` for tight loops."""
    depth = surface.penetration_sign * (e_i - surface.location)
    if depth > 0.0:
        return (
            -surface.penetration_sign * surface.stiffness * depth
            - surface.damping * ed_i
        )
    return 0.0


@dataclass
class DisturbanceSegment:
    """Constant wrench active on the half-open interval [t_start, t_end)."""

    t_start: float
    t_end: float
    wrench: np.ndarray

    def __post_init__(self):
        self.wrench = np.asarray(self.wrench, dtype=float)
        if self.wrench.shape != (N_AXES,):
            raise ValueError("segment wrench must be a 6-vector")
        if not self.t_end > self.t_start:
            raise ValueError("segment must satisfy t_end > t_start")


@dataclass
class DisturbanceProfile:
    """Piecewise-constant external wrench profile.

    Segments may overlap; overlapping wrenches add.  ``from_random``
    materializes a seeded pulse train so that a given (seed, parameters)
    pair always produces the identical profile.
    """

    segments: list = field(default_factory=list)
    seed: int | None = None

    @classmethod
    def from_random(
        cls,
        seed: int,
        count: int,
        t_range=(0.0, 5.0),
        duration=(0.3, 0.8),
        magnitude=(5.0, 25.0),
        axes=(0,),
    ) -> "DisturbanceProfile":
        """Draw ``count`` pulses with uniform start, duration and magnitude.

        Each pulse acts on a single axis drawn from ``axes`` with a random
        sign, so pulses push toward either side of the workspace.
        """
        rng = np.random.default_rng(seed)
        segs = []
        for _ in range(count):
            t0 = rng.uniform(t_range[0], t_range[1])
            dur = rng.uniform(duration[0], duration[1])
            axis = int(rng.choice(np.asarray(axes, dtype=int)))
            mag = rng.uniform(magnitude[0], magnitude[1])
            sign = 1.0 if rng.random() < 0.5 else -1.0
            w = np.zeros(N_AXES)
            w[axis] = sign * mag
            segs.append(DisturbanceSegment(t0, t0 + dur, w))
        return cls(segments=segs, seed=seed)


def disturbance_at(profile: DisturbanceProfile | None, t: float) -> np.ndarray:
    """Total disturbance wrench at time t (sum of active segments)."""
    f = np.zeros(N_AXES)
    if profile is None:
        return f
    for seg in profile.segments:
        if seg.t_start <= t < seg.t_end:
            f += seg.wrench
    return f


@dataclass
class ReferenceSchedule:
    """Commanded-pose schedule: waypoint times and 6-vector positions.

    ``interpolation`` is "hold" (zero-order hold, reference jumps at the
    waypoint times) or "linear" (piecewise-linear motion between them).
    Before the first waypoint the first value holds; after the last, the
    last value holds.
    """

    times: np.ndarray
    points: np.ndarray
    interpolation: str = "hold"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValueError("schedule needs at least one waypoint")
        if self.points.shape != (len(self.times), N_AXES):
            raise ValueError("points must have shape (n_waypoints, 6)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        if self.interpolation not in ("hold", "linear"):
            raise ValueError("interpolation must be 'hold' or 'linear'")


def reference_at(schedule: ReferenceSchedule, t: float) -> np.ndarray:
    """Commanded pose at time t under the schedule's interpolation mode."""
    times, pts = schedule.times, schedule.points
    if t <= times[0]:
        return pts[0].copy()
    if t >= times[-1]:
        return pts[-1].copy()
    j = int(np.searchsorted(times, t, side="right") - 1)
    if schedule.interpolation == "hold":
        return pts[j].copy()
    w = (t - times[j]) / (times[j + 1] - times[j])
    return (1.0 - w) * pts[j] + w * pts[j + 1]


def environment_force(
    state: PlantState,
    t: float,
    surfaces: tuple | list = (),
    disturbance: DisturbanceProfile | None = None,
) -> np.ndarray:
    """Total external wrench: contact forces plus disturbance at time t."""
    f = disturbance_at(disturbance, t)
    for s in surfaces:
        f += surface_force(state, s)
    return f
