"""Two-rate episode executive, metrics, and baseline comparison.

Each episode runs a fixed-rate control loop (default 125 Hz).  Every tick
the external wrench is measured, the current nominal gain vector is
projected onto the barrier constraint set by a small QP, physical gains
are recovered, and the plant is integrated one step while the force
sample is appended to a buffer.  Every ``buffer_period`` seconds a
low-frequency solve re-optimizes the nominal gains over the buffered
window (re-simulating candidates against the replayed force signal) and
the result replaces the nominal vector, optionally after a simulated
solver latency.

``baseline_mode`` switches between the full adaptive pipeline
("safe_ongo_vic") and a fixed-gain reference controller ("constant_gain")
that never updates or filters its gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    N_AXES,
    N_INPUTS,
    NonFiniteStateError,
    PlantState,
    U_MAX_DEFAULT,
    U_MIN_DEFAULT,
    input_from_gains,
    integrate_step,
    recover_gains,
)
from .environment import environment_force, reference_at
from .objective import (
    ReplayForceSource,
    TrajectoryWindow,
    fitave,
    fitave_recorded_inputs,
    itae,
    rollout_cost,
)
from .optimizer import (
    QpProblem,
    SqpOptions,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    qp_solve,
    qp_solve_relaxed,
    sqp_solve,
)
from .safety import BarrierParams, BoxSafeSet, assemble_constraints, barrier_values, bound_rows

MODE_SAFE_ONGO_VIC = "safe_ongo_vic"
MODE_CONSTANT_GAIN = "constant_gain"
MODES = (MODE_SAFE_ONGO_VIC, MODE_CONSTANT_GAIN)

CANDIDATE_EVALS = ("resimulate", "recorded")


def _broadcast18(x) -> np.ndarray:
    return np.broadcast_to(np.asarray(x, dtype=float), (N_INPUTS,)).copy()


@dataclass
class LoopConfig:
    """Timing, safety and solver settings of the two-rate loop."""

    tick_rate: float = 125.0
    buffer_period: float = 3.0
    gamma: float = 5.0
    substeps: int = 1
    rollout_substeps: int = 1
    baseline_mode: str = MODE_SAFE_ONGO_VIC
    simulated_solve_latency: float = 0.0
    candidate_eval: str = "resimulate"
    cost_kind: str = "fitave"
    u_min: np.ndarray = field(default_factory=lambda: np.full(N_INPUTS, U_MIN_DEFAULT))
    u_max: np.ndarray = field(default_factory=lambda: np.full(N_INPUTS, U_MAX_DEFAULT))
    sqp: SqpOptions = field(default_factory=SqpOptions)
    qp_tol: float = 1e-9

    def __post_init__(self):
        if self.tick_rate <= 0:
            raise ValueError("tick_rate must be positive")
        if self.buffer_period <= 0:
            raise ValueError("buffer_period must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.rollout_substeps < 1:
            raise ValueError("rollout_substeps must be >= 1")
        if self.baseline_mode not in MODES:
            raise ValueError(f"baseline_mode must be one of {MODES}")
        if self.candidate_eval not in CANDIDATE_EVALS:
            raise ValueError(f"candidate_eval must be one of {CANDIDATE_EVALS}")
        if self.candidate_eval == "recorded" and self.cost_kind != "fitave":
            raise ValueError("recorded candidate evaluation supports only the velocity cost")
        if self.simulated_solve_latency < 0:
            raise ValueError("simulated_solve_latency must be nonnegative")
        self.u_min = _broadcast18(self.u_min)
        self.u_max = _broadcast18(self.u_max)
        if np.any(self.u_min <= 0) or np.any(self.u_min >= self.u_max):
            raise ValueError("need 0 < u_min < u_max componentwise")


@dataclass
class MetricsConfig:
    """Definitions used by ``compute_metrics``.

    Settling uses a band of ``band_fraction`` of the initial error (with
    an absolute floor) around the steady-state estimate, certified over a
    dwell window; steady-state force statistics use the final
    ``steady_window`` seconds.
    """

    touch_force: float = 0.5
    band_fraction: float = 0.02
    band_floor: float = 1e-3
    dwell: float = 1.0
    steady_window: float = 3.0
    axis: int | None = None


@dataclass
class UpdateRecord:
    """One low-frequency solve: when it ran, what it changed, how it went."""

    tick: int
    t: float
    status: str
    iterations: int
    n_cost_evals: int
    cost_before: float
    cost_after: float
    kkt_residual: float
    applied_tick: int
    u_before: np.ndarray
    u_after: np.ndarray
    wall_time: float


@dataclass
class EpisodeEvent:
    tick: int
    t: float
    kind: str
    detail: str = ""


@dataclass
class TrajectoryLog:
    """Per-tick record of one episode (RK4 pre-step states).

    Row k holds the state at t = k/tick_rate, the wrench measured there,
    and the gain input applied over the following interval.  ``h`` stacks
    the barrier values of the active safe-set axes (columns follow
    ``h_labels``); ``qp_residual`` is the worst constraint-row residual of
    the applied input (NaN when the safety filter is off).
    """

    t: np.ndarray
    e: np.ndarray
    e_dot: np.ndarray
    f: np.ndarray
    u: np.ndarray
    h: np.ndarray
    h_labels: list
    qp_residual: np.ndarray
    events: list
    updates: list
    tick_rate: float
    seed: int
    scenario_name: str = ""
    terminal: str | None = None

    @property
    def n_ticks(self) -> int:
        return len(self.t)

    def min_barrier(self) -> float | None:
        if self.h.size == 0:
            return None
        return float(self.h.min())

    def window(self, k0: int, k1: int) -> TrajectoryWindow:
        """Samples of ticks [k0, k1) as a trajectory window."""
        return TrajectoryWindow(
            self.t[k0:k1].copy(),
            self.e[k0:k1].copy(),
            self.e_dot[k0:k1].copy(),
            self.f[k0:k1].copy(),
        )

    def full_window(self) -> TrajectoryWindow:
        return self.window(0, self.n_ticks)

    def event_flags(self) -> list:
        """Per-tick event summary, ';'-joined kinds (mostly empty strings)."""
        flags = [""] * self.n_ticks
        for ev in self.events:
            if 0 <= ev.tick < self.n_ticks:
                flags[ev.tick] = ev.kind if not flags[ev.tick] else flags[ev.tick] + ";" + ev.kind
        return flags


@dataclass
class MetricsReport:
    """Episode metrics; None marks a quantity that never converged/applied."""

    approaching_time: float | None
    settling_time: float | None
    steady_force_variance: float | None
    min_barrier: float | None
    fitave_total: float
    itae_total: float
    axis: int
    settling_band: float
    steady_state_error: float


def make_candidate_cost(window: TrajectoryWindow, cfg: LoopConfig):
    """Cost callable u -> scalar for the low-frequency gain solve.

    "resimulate" replays the recorded forces (zero-order hold) while
    re-integrating the error dynamics from the window's initial state
    under the candidate gains; "recorded" reconstructs the candidate
    velocity along the recorded states instead.
    """
    if cfg.candidate_eval == "recorded":
        return lambda u: fitave_recorded_inputs(window, u)
    source = ReplayForceSource(window)
    init = window.initial_state()
    dt = 1.0 / cfg.tick_rate
    horizon = window.n * dt

    def cost(u):
        return rollout_cost(u, init, source, horizon, dt, cfg.cost_kind, cfg.rollout_substeps)

    return cost


def _update_ticks(n_ticks: int, tick_rate: float, period: float) -> set:
    ticks = set()
    j = 1
    while True:
        k = math.floor(j * period * tick_rate)
        if k >= n_ticks:
            break
        ticks.add(k)
        j += 1
    return ticks


def run_episode(scenario) -> TrajectoryLog:
    """Simulate one episode of the scenario and log every tick.

    The per-tick sequence is: shift e if the commanded pose moved, apply
    any due low-frequency result, run the low-frequency solve if this is
    an update tick, measure the wrench, project the nominal gains onto
    the safety rows, recover physical gains, log, integrate one step.
    """
    cfg: LoopConfig = scenario.loop
    dt = 1.0 / cfg.tick_rate
    n_ticks = int(round(scenario.episode_length * cfg.tick_rate))
    if n_ticks < 1:
        raise ValueError("episode shorter than one tick")
    n_buf = int(round(cfg.buffer_period * cfg.tick_rate))
    update_ticks = _update_ticks(n_ticks, cfg.tick_rate, cfg.buffer_period)
    lo, hi = cfg.u_min, cfg.u_max

    rng = np.random.default_rng([int(scenario.seed), 101])
    if cfg.baseline_mode == MODE_CONSTANT_GAIN:
        u_star = input_from_gains(scenario.constant_gains)
    else:
        u_star = scenario.sample_initial_u(rng)
    u_star = np.clip(u_star, lo, hi)

    state = PlantState(scenario.e0.copy(), scenario.edot0.copy(), 0.0)
    surfaces = tuple(scenario.surfaces)
    disturbance = scenario.disturbance
    schedule = scenario.reference
    box: BoxSafeSet = scenario.safe_set
    params = BarrierParams(cfg.gamma)
    adaptive = cfg.baseline_mode == MODE_SAFE_ONGO_VIC
    use_safety = adaptive and box.any_active
    track_h = box.any_active
    b_rows = bound_rows(lo, hi)
    n_barrier_rows = 2 * int(box.active.sum()) if use_safety else 0
    h_labels = (
        [f"box_{kind}[{i}]" for i in range(N_AXES) if box.active[i] for kind in ("ub", "lb")]
        if track_h
        else []
    )

    def live_force(t, e, ed):
        return environment_force(PlantState(e, ed, t), t, surfaces, disturbance)

    log_t = np.empty(n_ticks)
    log_e = np.empty((n_ticks, N_AXES))
    log_ed = np.empty((n_ticks, N_AXES))
    log_f = np.empty((n_ticks, N_AXES))
    log_u = np.empty((n_ticks, N_INPUTS))
    log_h = np.empty((n_ticks, len(h_labels)))
    log_res = np.full(n_ticks, np.nan)
    events: list = []
    updates: list = []
    pending = None  # (apply_tick, u_new)
    terminal = None
    p_prev = reference_at(schedule, 0.0) if schedule is not None else None
    n_done = 0

    for k in range(n_ticks):
        t = k * dt
        if schedule is not None:
            p_now = reference_at(schedule, t)
            shift = p_now - p_prev
            if np.any(shift != 0.0):
                state.e = state.e - shift
            p_prev = p_now

        if pending is not None and k >= pending[0]:
            u_star = pending[1]
            pending = None
            events.append(EpisodeEvent(k, t, "update_applied"))

        if adaptive and k in update_ticks and k >= n_buf:
            window = TrajectoryWindow(
                log_t[k - n_buf : k].copy(),
                log_e[k - n_buf : k].copy(),
                log_ed[k - n_buf : k].copy(),
                log_f[k - n_buf : k].copy(),
            )
            cost = make_candidate_cost(window, cfg)
            rep = sqp_solve(cost, u_star, b_rows, cfg.sqp, bounds=(lo, hi))
            u_new = np.clip(rep.solution, lo, hi) if rep.solution is not None else u_star
            if cfg.simulated_solve_latency > 0.0:
                apply_tick = k + max(1, int(math.ceil(cfg.simulated_solve_latency / dt - 1e-12)))
                pending = (apply_tick, u_new)
            else:
                apply_tick = k
            updates.append(
                UpdateRecord(
                    tick=k,
                    t=t,
                    status=rep.status,
                    iterations=rep.iterations,
                    n_cost_evals=rep.n_cost_evals,
                    cost_before=rep.initial_cost,
                    cost_after=rep.cost,
                    kkt_residual=rep.kkt_residual,
                    applied_tick=apply_tick,
                    u_before=u_star.copy(),
                    u_after=u_new.copy(),
                    wall_time=rep.wall_time,
                )
            )
            events.append(EpisodeEvent(k, t, "update_solved"))
            if cfg.simulated_solve_latency == 0.0:
                u_star = u_new
                events.append(EpisodeEvent(k, t, "update_applied"))

        f_now = environment_force(state, t, surfaces, disturbance)

        if use_safety:
            rows = assemble_constraints(state, f_now, box, params, lo, hi)
            res_star = min(r.residual(u_star) for r in rows)
            if res_star >= -cfg.qp_tol:
                u_apply = u_star.copy()
            else:
                problem = QpProblem(2.0 * np.eye(N_INPUTS), -2.0 * u_star, rows)
                rep = qp_solve(problem, tol=cfg.qp_tol, x0=None)
                if rep.status == STATUS_INFEASIBLE:
                    soft = np.zeros(len(rows), dtype=bool)
                    soft[:n_barrier_rows] = True
                    relaxed = qp_solve_relaxed(problem, soft, x0=np.clip(u_star, lo, hi))
                    u_apply = np.clip(relaxed.solution, lo, hi)
                    events.append(EpisodeEvent(k, t, "qp_relaxed", f"violation={relaxed.max_violation:.3e}"))
                elif rep.status == STATUS_OPTIMAL:
                    u_apply = np.clip(rep.solution, lo, hi)
                else:
                    u_apply = np.clip(rep.solution, lo, hi)
                    events.append(EpisodeEvent(k, t, "qp_max_iter"))
            log_res[k] = min(r.residual(u_apply) for r in rows)
        else:
            u_apply = u_star.copy()
        if track_h:
            log_h[k] = [term.h for term in barrier_values(state, box)]

        recover_gains(u_apply)  # validates positivity of the applied input

        log_t[k] = t
        log_e[k] = state.e
        log_ed[k] = state.e_dot
        log_f[k] = f_now
        log_u[k] = u_apply
        n_done = k + 1

        try:
            state = integrate_step(state, u_apply, live_force, dt, substeps=cfg.substeps)
        except NonFiniteStateError:
            terminal = "nonfinite_state"
            events.append(EpisodeEvent(k, t, "nonfinite_terminal"))
            break

    sl = slice(0, n_done)
    return TrajectoryLog(
        t=log_t[sl],
        e=log_e[sl],
        e_dot=log_ed[sl],
        f=log_f[sl],
        u=log_u[sl],
        h=log_h[sl],
        h_labels=h_labels,
        qp_residual=log_res[sl],
        events=events,
        updates=updates,
        tick_rate=cfg.tick_rate,
        seed=int(scenario.seed),
        scenario_name=scenario.name,
        terminal=terminal,
    )


def compute_metrics(log: TrajectoryLog, cfg: MetricsConfig, contact_axis: int | None = None) -> MetricsReport:
    """Summarize an episode log.

    approaching_time: first time the contact-axis force magnitude exceeds
    the touch threshold.  settling_time: first time (from episode start,
    scanning after first contact when there is one) the axis error stays
    within the settling band around the steady-state estimate for a full
    dwell window.  Both are None when never reached.
    """
    axis = cfg.axis if cfg.axis is not None else (contact_axis if contact_axis is not None else 0)
    n = log.n_ticks
    dt = 1.0 / log.tick_rate
    fa = log.f[:, axis]
    ea = log.e[:, axis]

    touched = np.nonzero(np.abs(fa) > cfg.touch_force)[0]
    approaching = float(log.t[touched[0]]) if touched.size else None

    n_w = max(2, int(round(cfg.steady_window / dt)))
    n_w = min(n_w, n)
    e_ss = float(ea[-n_w:].mean())
    band = max(cfg.band_fraction * abs(float(ea[0]) - e_ss), cfg.band_floor)
    dwell_n = int(round(cfg.dwell / dt))
    inside = np.abs(ea - e_ss) <= band
    bad = np.concatenate([[0], np.cumsum(~inside)])
    start = int(touched[0]) if touched.size else 0
    settling = None
    last_start = n - 1 - dwell_n
    for i in range(start, max(last_start, -1) + 1):
        if bad[i + dwell_n + 1] - bad[i] == 0:
            settling = float(log.t[i])
            break

    variance = float(np.var(fa[-n_w:], ddof=1)) if n_w >= 2 else None

    full = log.full_window()
    return MetricsReport(
        approaching_time=approaching,
        settling_time=settling,
        steady_force_variance=variance,
        min_barrier=log.min_barrier(),
        fitave_total=fitave(full),
        itae_total=itae(full),
        axis=axis,
        settling_band=band,
        steady_state_error=e_ss,
    )


def compare_baselines(scenario, modes) -> dict:
    """Run the scenario once per mode with shared seeds and summarize each."""
    modes = list(modes)
    if len(modes) < 2:
        raise ValueError("need at least two modes to compare")
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode '{m}'")
    out = {}
    for m in modes:
        sc = scenario.with_mode(m)
        log = run_episode(sc)
        out[m] = compute_metrics(log, sc.metrics, contact_axis=sc.contact_axis())
    return out
