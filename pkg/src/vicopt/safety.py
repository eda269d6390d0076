"""Barrier-based safety constraints, linear in the gain input vector.

A safe set is described by smooth functions h(x) >= 0.  Position-only
barriers have relative degree two for the impedance error dynamics, so
the extension

    h' = dh/dt + gamma * h

is applied twice with the same rate gamma.  Keeping h'' >= 0, expanded
along the error dynamics, yields per barrier the condition

    d2h/de2 * e_dot^2
      + dh/de * ( g2(x) u + 2 gamma e_dot )
      + gamma^2 * h(e)  >=  0,

which is linear in u and therefore a single inequality row a.u + b >= 0
that the per-tick projection QP can enforce.

The shipped safe set is an axis-aligned box on the position error with
upper barrier h = d_ub_i - e_i and lower barrier h = e_i - d_lb_i per
active axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import N_AXES, N_INPUTS, PlantState

GAMMA_DEFAULT = 5.0


@dataclass
class BarrierParams:
    """Extension rate gamma (1/s) shared by both extensions."""

    gamma: float = GAMMA_DEFAULT

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass
class BoxSafeSet:
    """Axis-aligned box d_lb <= e <= d_ub with a per-axis active mask."""

    d_lb: np.ndarray
    d_ub: np.ndarray
    active: np.ndarray = field(default_factory=lambda: np.ones(N_AXES, dtype=bool))

    def __post_init__(self):
        self.d_lb = np.asarray(self.d_lb, dtype=float)
        self.d_ub = np.asarray(self.d_ub, dtype=float)
        self.active = np.asarray(self.active, dtype=bool)
        for name, a in (("d_lb", self.d_lb), ("d_ub", self.d_ub), ("active", self.active)):
            if a.shape != (N_AXES,):
                raise ValueError(f"{name} must be a 6-vector")
        if np.any(self.d_lb[self.active] >= self.d_ub[self.active]):
            raise ValueError("active axes need d_lb < d_ub")

    @property
    def any_active(self) -> bool:
        return bool(self.active.any())


@dataclass
class BarrierTerm:
    """One position barrier: value plus first/second derivatives in e[axis]."""

    axis: int
    kind: str  # "ub" or "lb"
    h: float
    grad: float
    hess: float


@dataclass
class ConstraintRow:
    """Linear inequality a . u + b >= 0 (any dimension; gain rows use 18)."""

    a: np.ndarray
    b: float
    label: str = ""

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.a.ndim != 1 or self.a.size == 0 or not np.all(np.isfinite(self.a)):
            raise ValueError("row coefficients must be a finite 1-D vector")
        self.b = float(self.b)
        if not np.isfinite(self.b):
            raise ValueError("row offset must be finite")

    def residual(self, u) -> float:
        return float(self.a @ u + self.b)


def barrier_values(state: PlantState, box: BoxSafeSet) -> list[BarrierTerm]:
    """Barrier terms for every active axis: upper then lower per axis."""
    terms = []
    for i in range(N_AXES):
        if not box.active[i]:
            continue
        terms.append(BarrierTerm(i, "ub", float(box.d_ub[i] - state.e[i]), -1.0, 0.0))
        terms.append(BarrierTerm(i, "lb", float(state.e[i] - box.d_lb[i]), 1.0, 0.0))
    return terms


def extended_barrier(state: PlantState, term: BarrierTerm, params: BarrierParams) -> float:
    """First extension h' = dh/de * e_dot + gamma * h for one barrier."""
    return term.grad * state.e_dot[term.axis] + params.gamma * term.h


def constraint_row(
    state: PlantState,
    wrench,
    term: BarrierTerm,
    params: BarrierParams,
) -> ConstraintRow:
    """Row of the twice-extended barrier condition for one barrier.

    The input-dependent part enters through the barrier axis's row of
    g2(x); the constant part collects curvature, the cross term
    2*gamma*dh/de*e_dot and gamma^2*h.
    """
    i = term.axis
    f = np.asarray(wrench, dtype=float)
    g = params.gamma
    a = np.zeros(N_INPUTS)
    a[i] = term.grad * (-state.e_dot[i])
    a[N_AXES + i] = term.grad * (-state.e[i])
    a[2 * N_AXES + i] = term.grad * f[i]
    b = (
        term.hess * state.e_dot[i] ** 2
        + 2.0 * g * term.grad * state.e_dot[i]
        + g * g * term.h
    )
    return ConstraintRow(a, b, label=f"box_{term.kind}[{i}]")


def bound_rows(u_min, u_max) -> list[ConstraintRow]:
    """Box rows u_min <= u <= u_max as 2 * 18 inequality rows."""
    lo = np.broadcast_to(np.asarray(u_min, dtype=float), (N_INPUTS,))
    hi = np.broadcast_to(np.asarray(u_max, dtype=float), (N_INPUTS,))
    if np.any(lo >= hi):
        raise ValueError("bounds must satisfy u_min < u_max")
    rows = []
    for j in range(N_INPUTS):
        a = np.zeros(N_INPUTS)
        a[j] = 1.0
        rows.append(ConstraintRow(a, -lo[j], label=f"u_lo[{j}]"))
        a = np.zeros(N_INPUTS)
        a[j] = -1.0
        rows.append(ConstraintRow(a, hi[j], label=f"u_hi[{j}]"))
    return rows


def assemble_constraints(
    state: PlantState,
    wrench,
    box: BoxSafeSet,
    params: BarrierParams,
    u_min,
    u_max,
) -> list[ConstraintRow]:
    """All rows the per-tick safety QP must respect at this state.

    Two barrier rows per active axis (in ``barrier_values`` order)
    followed by the 36 input-bound rows.
    """
    rows = [
        constraint_row(state, wrench, term, params)
        for term in barrier_values(state, box)
    ]
    rows.extend(bound_rows(u_min, u_max))
    return rows
