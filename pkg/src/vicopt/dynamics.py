"""Control-affine error dynamics of a Cartesian impedance controller.

The closed loop of a 6-axis impedance controller with diagonal desired
inertia M, damping K_d and stiffness K_p is

    M e'' + K_d e' + K_p e = F,

with e the Cartesian error and F the external wrench.  Normalizing each
axis by its inertia turns the loop into a system that is affine in the
stacked gain vector

    u = [K_d,1/M_1 .. K_d,6/M_6,  K_p,1/M_1 .. K_p,6/M_6,  1/M_1 .. 1/M_6],

so that per axis

    e_i'' = -u[i] * e_i' - u[6+i] * e_i + u[12+i] * F_i.

Everything in this module works on that 18-component input vector.  Axes
are fully decoupled; the 6-vector e is treated as a generic decoupled
error coordinate (no special handling of orientation components).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_AXES = 6
N_INPUTS = 3 * N_AXES

# Componentwise bounds on the gain input vector.  Positivity of every
# component keeps the recovered M, K_d, K_p positive definite.
U_MIN_DEFAULT = 1e-6
U_MAX_DEFAULT = 1e6

# Control runs at 125 Hz; one integration step never spans more than a tick.
DT_MAX_DEFAULT = 1.0 / 125.0


class NonFiniteStateError(RuntimeError):
    """Raised when integration produces a non-finite state component."""


def _as_vector(x, n, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def as_wrench(f) -> np.ndarray:
    """Validate and return a finite 6-component external wrench."""
    v = _as_vector(f, N_AXES, "wrench")
    if not np.all(np.isfinite(v)):
        raise ValueError("wrench has non-finite components")
    return v


@dataclass
class PlantState:
    """Error-space state: position error e, velocity error e_dot, time t."""

    e: np.ndarray
    e_dot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.e = _as_vector(self.e, N_AXES, "e")
        self.e_dot = _as_vector(self.e_dot, N_AXES, "e_dot")
        self.t = float(self.t)

    def copy(self) -> "PlantState":
        return PlantState(self.e.copy(), self.e_dot.copy(), self.t)


@dataclass
class ImpedanceGains:
    """Diagonal impedance parameters, one entry per Cartesian axis."""

    m: np.ndarray
    kd: np.ndarray
    kp: np.ndarray

    def __post_init__(self):
        self.m = _as_vector(self.m, N_AXES, "m")
        self.kd = _as_vector(self.kd, N_AXES, "kd")
        self.kp = _as_vector(self.kp, N_AXES, "kp")
        if np.any(self.m <= 0):
            raise ValueError("desired inertia entries must be positive")
        if np.any(self.kd <= 0) or np.any(self.kp <= 0):
            raise ValueError("damping and stiffness entries must be positive")


def check_gain_input(u, u_min=U_MIN_DEFAULT, u_max=U_MAX_DEFAULT) -> np.ndarray:
    """Validate an 18-component gain input vector against its box bounds.

    ``u_min``/``u_max`` may be scalars or 18-vectors.  Returns the vector
    as a float array; raises ValueError on shape, sign or bound trouble.
    """
    v = _as_vector(u, N_INPUTS, "u")
    if not np.all(np.isfinite(v)):
        raise ValueError("gain input has non-finite components")
    lo = np.broadcast_to(np.asarray(u_min, dtype=float), (N_INPUTS,))
    hi = np.broadcast_to(np.asarray(u_max, dtype=float), (N_INPUTS,))
    if np.any(v < lo) or np.any(v > hi):
        raise ValueError("gain input violates its box bounds")
    if np.any(v <= 0):
        raise ValueError("gain input components must be strictly positive")
    return v


def assemble_g2(state: PlantState, wrench) -> np.ndarray:
    """Input matrix of the acceleration row, shape (6, 18).

    Columns multiply the normalized damping, normalized stiffness and
    inverse-inertia blocks of u:

        g2(x) = [ diag(-e_dot) | diag(-e) | diag(F) ].
    """
    f = as_wrench(wrench)
    g2 = np.zeros((N_AXES, N_INPUTS))
    idx = np.arange(N_AXES)
    g2[idx, idx] = -state.e_dot
    g2[idx, N_AXES + idx] = -state.e
    g2[idx, 2 * N_AXES + idx] = f
    return g2


def state_derivative(state: PlantState, u, wrench):
    """Time derivative (e_dot, e_ddot) of the error state under input u.

    Computed componentwise; identical to ``assemble_g2(state, F) @ u``.
    """
    u = _as_vector(u, N_INPUTS, "u")
    f = np.asarray(wrench, dtype=float)
    e_ddot = (
        -u[:N_AXES] * state.e_dot
        - u[N_AXES : 2 * N_AXES] * state.e
        + u[2 * N_AXES :] * f
    )
    return state.e_dot.copy(), e_ddot


def integrate_step(
    state: PlantState,
    u,
    force_fn,
    dt: float,
    substeps: int = 1,
    dt_max: float = DT_MAX_DEFAULT,
) -> PlantState:
    """Advance the error state by one control interval with classical RK4.

    ``force_fn(t, e, e_dot)`` supplies the external wrench and is
    evaluated at the RK4 stage times with the stage states, so contact
    models that depend on the instantaneous error integrate accurately.
    ``substeps`` splits the interval for very stiff contact.

    Raises NonFiniteStateError if the step produces NaN or infinity.
    """
    if not (0.0 < dt <= dt_max + 1e-15):
        raise ValueError(f"dt must lie in (0, {dt_max}], got {dt}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u = _as_vector(u, N_INPUTS, "u")
    ukd = u[:N_AXES]
    ukp = u[N_AXES : 2 * N_AXES]
    uminv = u[2 * N_AXES :]

    def accel(t, e, ed):
        f = np.asarray(force_fn(t, e, ed), dtype=float)
        return -ukd * ed - ukp * e + uminv * f

    h = dt / substeps
    e = state.e.copy()
    ed = state.e_dot.copy()
    t = state.t
    # divergence is detected below and raised as a typed error, so the
    # transient overflow warnings on the way there carry no information
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(substeps):
            t0 = state.t + k * h
            a1 = accel(t0, e, ed)
            k1e, k1v = ed, a1
            a2 = accel(t0 + 0.5 * h, e + 0.5 * h * k1e, ed + 0.5 * h * k1v)
            k2e, k2v = ed + 0.5 * h * k1v, a2
            a3 = accel(t0 + 0.5 * h, e + 0.5 * h * k2e, ed + 0.5 * h * k2v)
            k3e, k3v = ed + 0.5 * h * k2v, a3
            a4 = accel(t0 + h, e + h * k3e, ed + h * k3v)
            k4e, k4v = ed + h * k3v, a4
            e = e + (h / 6.0) * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
            ed = ed + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(ed))):
        raise NonFiniteStateError(f"non-finite state after step from t={state.t:.6f}")
    return PlantState(e, ed, state.t + dt)


def recover_gains(u) -> ImpedanceGains:
    """Map a gain input vector back to physical impedance parameters.

    M = 1 / u[12:18] elementwise, K_d = M * u[0:6], K_p = M * u[6:12].
    """
    u = check_gain_input(u, u_min=0.0, u_max=np.inf)
    m = 1.0 / u[2 * N_AXES :]
    return ImpedanceGains(m=m, kd=m * u[:N_AXES], kp=m * u[N_AXES : 2 * N_AXES])


def input_from_gains(gains: ImpedanceGains) -> np.ndarray:
    """Inverse of ``recover_gains``: stack (K_d/M, K_p/M, 1/M)."""
    return np.concatenate([gains.kd / gains.m, gains.kp / gains.m, 1.0 / gains.m])
