"""Tracking-cost definitions and candidate-gain rollout evaluation.

Two integral costs over a uniformly sampled trajectory window, both with
time measured from the window start and the L1 norm across axes:

    error cost (ITAE):      integral of t * sum_i |e_i(t)| dt
    velocity cost (FITAVE): integral of t * sum_i |e_dot_i(t)| dt

The velocity cost is what the low-frequency gain optimizer minimizes: it
penalizes late velocity transients, which is what contact oscillation
looks like, without needing a force reference.  Both integrals use the
trapezoidal rule on the sample grid.

``rollout_cost`` scores a candidate gain vector by re-simulating the
error dynamics from a window's initial state, either replaying recorded
forces (zero-order hold between samples) or querying a live environment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import (
    N_AXES,
    N_INPUTS,
    NonFiniteStateError,
    PlantState,
    integrate_step,
)
from .environment import ContactSurface, DisturbanceProfile, environment_force

COST_KINDS = ("fitave", "itae")


@dataclass
class TrajectoryWindow:
    """Uniformly sampled trajectory slice: times, errors, velocities, forces.

    ``origin_time`` labels the window start; costs are invariant under
    shifting it because integrand weights are always t - t[0].
    """

    t: np.ndarray
    e: np.ndarray
    e_dot: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.e = np.asarray(self.e, dtype=float)
        self.e_dot = np.asarray(self.e_dot, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = len(self.t)
        if n == 0:
            raise ValueError("window must contain at least one sample")
        for name, arr in (("e", self.e), ("e_dot", self.e_dot), ("f", self.f)):
            if arr.shape != (n, N_AXES):
                raise ValueError(f"{name} must have shape ({n}, {N_AXES})")
        if n > 1:
            steps = np.diff(self.t)
            if np.any(np.abs(steps - steps[0]) > 1e-9):
                raise ValueError("window samples must be uniformly spaced")
            if steps[0] <= 0:
                raise ValueError("window times must be increasing")

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        if self.n < 2:
            raise ValueError("sample spacing undefined for a single sample")
        return float(self.t[1] - self.t[0])

    @property
    def origin_time(self) -> float:
        return float(self.t[0])

    def initial_state(self) -> PlantState:
        return PlantState(self.e[0].copy(), self.e_dot[0].copy(), float(self.t[0]))


def _weighted_l1_integral(t: np.ndarray, values: np.ndarray) -> float:
    # trapezoid of (t - t0) * sum_i |values_i|
    if len(t) < 2:
        return 0.0
    g = (t - t[0]) * np.abs(values).sum(axis=1)
    dt = t[1] - t[0]
    return float(0.5 * dt * (g[:-1] + g[1:]).sum())


def itae(window: TrajectoryWindow) -> float:
    """Time-weighted absolute error integral over the window."""
    return _weighted_l1_integral(window.t, window.e)


def fitave(window: TrajectoryWindow) -> float:
    """Time-weighted absolute velocity-error integral over the window."""
    return _weighted_l1_integral(window.t, window.e_dot)


class ReplayForceSource:
    """Replays a recorded force signal with zero-order hold between samples.

    Reads only the window's times and forces; recorded states play no role,
    so two windows differing only in e / e_dot replay identically.
    """

    def __init__(self, window: TrajectoryWindow):
        self.t0 = float(window.t[0])
        self.dt_s = window.dt if window.n > 1 else None
        self.f = window.f.copy()

    def _index(self, t: float) -> int:
        if self.dt_s is None:
            return 0
        j = int(np.floor((t - self.t0) / self.dt_s + 1e-9))
        return min(max(j, 0), len(self.f) - 1)

    def __call__(self, t, e, e_dot):
        return self.f[self._index(t)]

    def held_at_ticks(self, t_start: float, dt: float, n_ticks: int) -> np.ndarray:
        """Force samples held per rollout tick, shape (n_ticks, 6)."""
        ts = t_start + dt * np.arange(n_ticks)
        idx = np.array([self._index(t) for t in ts])
        return self.f[idx]


class LiveForceSource:
    """Queries surface contact forces (and optional disturbances) live."""

    def __init__(self, surfaces=(), disturbance: DisturbanceProfile | None = None):
        self.surfaces = tuple(surfaces)
        self.disturbance = disturbance

    def __call__(self, t, e, e_dot):
        return environment_force(PlantState(e, e_dot, t), t, self.surfaces, self.disturbance)


def _pack_surfaces(surfaces):
    n = len(surfaces)
    axis = np.array([s.axis for s in surfaces], dtype=np.int64)
    loc = np.array([s.location for s in surfaces], dtype=float)
    k = np.array([s.stiffness for s in surfaces], dtype=float)
    c = np.array([s.damping for s in surfaces], dtype=float)
    sign = np.array([float(s.penetration_sign) for s in surfaces], dtype=float)
    if n == 0:
        return (
            np.zeros(0, dtype=np.int64),
            np.zeros(0),
            np.zeros(0),
            np.zeros(0),
            np.zeros(0),
        )
    return axis, loc, k, c, sign


def rollout_costs_pair(
    u,
    init: PlantState,
    force_source,
    horizon: float,
    dt: float,
    substeps: int = 1,
):
    """(velocity_cost, error_cost) for one candidate rollout; inf on blow-up."""
    u = np.asarray(u, dtype=float)
    if u.shape != (N_INPUTS,):
        raise ValueError("u must be an 18-vector")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n_ticks = int(round(horizon / dt))
    if n_ticks < 1:
        raise ValueError("horizon shorter than one tick")

    empty_f = np.zeros((0, N_AXES))
    if isinstance(force_source, ReplayForceSource):
        f_rep = np.ascontiguousarray(force_source.held_at_ticks(init.t, dt, n_ticks))
        packed = _pack_surfaces(())
    elif isinstance(force_source, LiveForceSource) and force_source.disturbance is None:
        f_rep = empty_f
        packed = _pack_surfaces(force_source.surfaces)
    else:
        return _rollout_costs_python(u, init, force_source, n_ticks, dt, substeps)

    vel, err, ok = _kernels.rollout_costs(
        u, init.e.copy(), init.e_dot.copy(), dt, n_ticks, substeps, f_rep, *packed
    )
    if not ok:
        return np.inf, np.inf
    return float(vel), float(err)


def _rollout_costs_python(u, init, force_source, n_ticks, dt, substeps):
    # Reference path: same trapezoid accumulation driven by integrate_step.
    # Replay sources are sampled once per tick (zero-order hold through the
    # whole step, matching the kernel); live sources see the stage states.
    state = init.copy()
    held = None
    if isinstance(force_source, ReplayForceSource):
        held = force_source.held_at_ticks(init.t, dt, n_ticks)
    g_vel_prev = 0.0
    g_err_prev = 0.0
    vel = 0.0
    err = 0.0
    for k in range(n_ticks):
        if held is None:
            tick_force = force_source
        else:
            f_k = held[k]
            tick_force = lambda t, e, ed, f_k=f_k: f_k
        try:
            state = integrate_step(state, u, tick_force, dt, substeps=substeps)
        except NonFiniteStateError:
            return np.inf, np.inf
        t_rel = (k + 1) * dt
        g_vel = t_rel * np.abs(state.e_dot).sum()
        g_err = t_rel * np.abs(state.e).sum()
        vel += 0.5 * (g_vel_prev + g_vel) * dt
        err += 0.5 * (g_err_prev + g_err) * dt
        g_vel_prev = g_vel
        g_err_prev = g_err
    return float(vel), float(err)


def rollout_cost(
    u,
    init: PlantState,
    force_source,
    horizon: float,
    dt: float,
    cost_kind: str = "fitave",
    substeps: int = 1,
) -> float:
    """Cost of holding gains u over the horizon, +inf if the state blows up.

    Replay sources re-simulate the error dynamics against the recorded
    force signal; live sources close the loop through the environment.
    """
    if cost_kind not in COST_KINDS:
        raise ValueError(f"cost_kind must be one of {COST_KINDS}")
    vel, err = rollout_costs_pair(u, init, force_source, horizon, dt, substeps)
    return vel if cost_kind == "fitave" else err


def simulate_rollout(
    u,
    init: PlantState,
    force_source,
    horizon: float,
    dt: float,
    substeps: int = 1,
) -> TrajectoryWindow:
    """Full rollout trajectory (tick-boundary samples, includes endpoints)."""
    n_ticks = int(round(horizon / dt))
    if n_ticks < 1:
        raise ValueError("horizon shorter than one tick")
    ts = np.empty(n_ticks + 1)
    es = np.empty((n_ticks + 1, N_AXES))
    eds = np.empty((n_ticks + 1, N_AXES))
    fs = np.empty((n_ticks + 1, N_AXES))
    state = init.copy()
    for k in range(n_ticks + 1):
        ts[k] = init.t + k * dt
        es[k] = state.e
        eds[k] = state.e_dot
        fs[k] = np.asarray(force_source(ts[k], state.e, state.e_dot), dtype=float)
        if k < n_ticks:
            state = integrate_step(state, u, force_source, dt, substeps=substeps)
    return TrajectoryWindow(ts, es, eds, fs)


def fitave_recorded_inputs(window: TrajectoryWindow, u) -> float:
    """Velocity cost with the candidate acceleration taken along the
    recorded states instead of re-simulating.

    The candidate velocity is reconstructed by integrating the input-map
    acceleration evaluated on the recorded (e, e_dot, F) samples:

        a_k = -u_kd * e_dot_k - u_kp * e_k + u_minv * F_k,
        v(t) = e_dot(t0) + integral of a.

    Cheaper but ignores how the candidate gains would reshape the state
    trajectory; selectable with ``candidate_eval: "recorded"``.
    """
    u = np.asarray(u, dtype=float)
    acc = (
        -u[:N_AXES] * window.e_dot
        - u[N_AXES : 2 * N_AXES] * window.e
        + u[2 * N_AXES :] * window.f
    )
    if window.n < 2:
        return 0.0
    dt = window.dt
    v = np.empty_like(acc)
    v[0] = window.e_dot[0]
    # cumulative trapezoid of the reconstructed acceleration
    v[1:] = window.e_dot[0] + np.cumsum(0.5 * dt * (acc[:-1] + acc[1:]), axis=0)
    g = (window.t - window.t[0]) * np.abs(v).sum(axis=1)
    return float(0.5 * dt * (g[:-1] + g[1:]).sum())
