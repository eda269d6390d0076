"""Compiled inner loops for candidate-gain rollouts.

The low-frequency optimizer evaluates hundreds of candidate gain vectors
per solve, each requiring a full re-simulation of the buffered window, so
the rollout loop is JIT-compiled with numba when available.  The math is
the same classical RK4 scheme as ``dynamics.integrate_step``; axes are
decoupled, so the kernel advances each axis independently.

Without numba the kernels run as plain Python (much slower, same results).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba present in normal installs
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True, inline="always")
def _axis_surface_force(i, ei, edi, surf_axis, surf_loc, surf_k, surf_c, surf_sign):
    f = 0.0
    for j in range(surf_axis.shape[0]):
        if surf_axis[j] == i:
            depth = surf_sign[j] * (ei - surf_loc[j])
            if depth > 0.0:
                f += -surf_sign[j] * surf_k[j] * depth - surf_c[j] * edi
    return f


@njit(cache=True)
def rollout_costs(
    u,
    e0,
    ed0,
    dt,
    n_ticks,
    substeps,
    f_replay,
    surf_axis,
    surf_loc,
    surf_k,
    surf_c,
    surf_sign,
):
    """Simulate n_ticks control intervals under constant u and accumulate
    both time-weighted absolute-velocity and absolute-error integrals
    (trapezoidal rule on the tick grid, time measured from rollout start).

    ``f_replay`` with shape (n_ticks, 6) replays a recorded force with
    zero-order hold per tick; an empty (0, 6) array selects live surface
    forces evaluated at the RK4 stage states.

    Returns (velocity_cost, error_cost, ok).  ``ok`` is False when the
    state leaves the finite range, in which case both costs are +inf.
    """
    n = 6
    replay = f_replay.shape[0] > 0
    h = dt / substeps
    e = e0.copy()
    ed = ed0.copy()
    vel_cost = 0.0
    err_cost = 0.0
    g_vel_prev = 0.0  # integrands carry weight t, so both vanish at t=0
    g_err_prev = 0.0
    for k in range(n_ticks):
        for s in range(substeps):
            for i in range(n):
                ukd = u[i]
                ukp = u[6 + i]
                umi = u[12 + i]
                ei = e[i]
                edi = ed[i]
                if replay:
                    f1 = f_replay[k, i]
                    f2 = f1
                    f3 = f1
                    f4 = f1
                    e2 = ei + 0.5 * h * edi
                    a1 = -ukd * edi - ukp * ei + umi * f1
                    ed2 = edi + 0.5 * h * a1
                    a2 = -ukd * ed2 - ukp * e2 + umi * f2
                    e3 = ei + 0.5 * h * ed2
                    ed3 = edi + 0.5 * h * a2
                    a3 = -ukd * ed3 - ukp * e3 + umi * f3
                    e4 = ei + h * ed3
                    ed4 = edi + h * a3
                    a4 = -ukd * ed4 - ukp * e4 + umi * f4
                else:
                    f1 = _axis_surface_force(
                        i, ei, edi, surf_axis, surf_loc, surf_k, surf_c, surf_sign
                    )
                    a1 = -ukd * edi - ukp * ei + umi * f1
                    e2 = ei + 0.5 * h * edi
                    ed2 = edi + 0.5 * h * a1
                    f2 = _axis_surface_force(
                        i, e2, ed2, surf_axis, surf_loc, surf_k, surf_c, surf_sign
                    )
                    a2 = -ukd * ed2 - ukp * e2 + umi * f2
                    e3 = ei + 0.5 * h * ed2
                    ed3 = edi + 0.5 * h * a2
                    f3 = _axis_surface_force(
                        i, e3, ed3, surf_axis, surf_loc, surf_k, surf_c, surf_sign
                    )
                    a3 = -ukd * ed3 - ukp * e3 + umi * f3
                    e4 = ei + h * ed3
                    ed4 = edi + h * a3
                    f4 = _axis_surface_force(
                        i, e4, ed4, surf_axis, surf_loc, surf_k, surf_c, surf_sign
                    )
                    a4 = -ukd * ed4 - ukp * e4 + umi * f4
                e[i] = ei + (h / 6.0) * (edi + 2.0 * ed2 + 2.0 * ed3 + ed4)
                ed[i] = edi + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        t_rel = (k + 1) * dt
        g_vel = 0.0
        g_err = 0.0
        finite = True
        for i in range(n):
            if not (np.isfinite(e[i]) and np.isfinite(ed[i])):
                finite = False
            g_vel += abs(ed[i])
            g_err += abs(e[i])
        if not finite:
            return np.inf, np.inf, False
        g_vel *= t_rel
        g_err *= t_rel
        vel_cost += 0.5 * (g_vel_prev + g_vel) * dt
        err_cost += 0.5 * (g_err_prev + g_err) * dt
        g_vel_prev = g_vel
        g_err_prev = g_err
    return vel_cost, err_cost, True


_EMPTY_F = np.zeros((0, 6))
_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_D = np.zeros(0)


def warmup():
    """Trigger JIT compilation with a tiny problem so later calls are fast."""
    u = np.ones(18)
    z = np.zeros(6)
    rollout_costs(u, z + 0.1, z, 0.008, 2, 1, _EMPTY_F, _EMPTY_I, _EMPTY_D, _EMPTY_D, _EMPTY_D, _EMPTY_D)
    rollout_costs(
        u,
        z + 0.1,
        z,
        0.008,
        2,
        1,
        np.zeros((2, 6)),
        _EMPTY_I,
        _EMPTY_D,
        _EMPTY_D,
        _EMPTY_D,
        _EMPTY_D,
    )
