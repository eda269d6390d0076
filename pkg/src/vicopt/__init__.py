"""Safe online optimization of variable impedance gains.

A simulation and tuning toolkit for Cartesian impedance control with
per-axis inertia, damping and stiffness.  The plant is the tracking-error
dynamics driven by an external wrench; the control input is the gain
vector itself (normalized damping, normalized stiffness, inverse
inertia).  On top of that sit:

- time-weighted trajectory costs and force-replay candidate evaluation
  (``objective``),
- position barrier constraints over the gain input plus a small active-set
  QP and a finite-difference SQP (``safety``, ``optimizer``),
- a two-rate runtime: a fast safety projection every control tick and a
  buffered gain re-optimization every few seconds (``runtime``),
- strict JSON scenario files, bundled presets and a CLI (``scenario``,
  ``cli``).
"""

from .dynamics import (
    DT_MAX_DEFAULT,
    N_AXES,
    N_INPUTS,
    NonFiniteStateError,
    ImpedanceGains,
    PlantState,
    U_MAX_DEFAULT,
    U_MIN_DEFAULT,
    assemble_g2,
    check_gain_input,
    input_from_gains,
    integrate_step,
    recover_gains,
    state_derivative,
)
from .environment import (
    ContactSurface,
    DisturbanceProfile,
    DisturbanceSegment,
    ReferenceSchedule,
    disturbance_at,
    environment_force,
    reference_at,
    surface_force,
)
from .objective import (
    LiveForceSource,
    ReplayForceSource,
    TrajectoryWindow,
    fitave,
    fitave_recorded_inputs,
    itae,
    rollout_cost,
    rollout_costs_pair,
    simulate_rollout,
)
from .optimizer import (
    NonFiniteCostError,
    QpProblem,
    SolveReport,
    SqpOptions,
    STATUS_INFEASIBLE,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    STATUS_RELAXED,
    fd_gradient,
    kkt_residual_inequality,
    qp_solve,
    qp_solve_relaxed,
    rows_to_arrays,
    sqp_solve,
)
from .runtime import (
    LoopConfig,
    MetricsConfig,
    MetricsReport,
    MODE_CONSTANT_GAIN,
    MODE_SAFE_ONGO_VIC,
    MODES,
    TrajectoryLog,
    UpdateRecord,
    compare_baselines,
    compute_metrics,
    run_episode,
)
from .safety import (
    BarrierParams,
    BarrierTerm,
    BoxSafeSet,
    ConstraintRow,
    assemble_constraints,
    barrier_values,
    bound_rows,
    constraint_row,
    extended_barrier,
)
from .scenario import (
    ParseError,
    Scenario,
    ValidationError,
    bundled_scenario_names,
    load_bundled,
    load_scenario,
    scenario_from_dict,
)

__version__ = "0.1.0"

__all__ = [
    "DT_MAX_DEFAULT",
    "N_AXES",
    "N_INPUTS",
    "U_MAX_DEFAULT",
    "U_MIN_DEFAULT",
    "NonFiniteStateError",
    "NonFiniteCostError",
    "ImpedanceGains",
    "PlantState",
    "assemble_g2",
    "check_gain_input",
    "input_from_gains",
    "integrate_step",
    "recover_gains",
    "state_derivative",
    "ContactSurface",
    "DisturbanceProfile",
    "DisturbanceSegment",
    "ReferenceSchedule",
    "disturbance_at",
    "environment_force",
    "reference_at",
    "surface_force",
    "LiveForceSource",
    "ReplayForceSource",
    "TrajectoryWindow",
    "fitave",
    "fitave_recorded_inputs",
    "itae",
    "rollout_cost",
    "rollout_costs_pair",
    "simulate_rollout",
    "QpProblem",
    "SolveReport",
    "SqpOptions",
    "STATUS_INFEASIBLE",
    "STATUS_MAX_ITER",
    "STATUS_OPTIMAL",
    "STATUS_RELAXED",
    "fd_gradient",
    "kkt_residual_inequality",
    "qp_solve",
    "qp_solve_relaxed",
    "rows_to_arrays",
    "sqp_solve",
    "LoopConfig",
    "MetricsConfig",
    "MetricsReport",
    "MODE_CONSTANT_GAIN",
    "MODE_SAFE_ONGO_VIC",
    "MODES",
    "TrajectoryLog",
    "UpdateRecord",
    "compare_baselines",
    "compute_metrics",
    "run_episode",
    "BarrierParams",
    "BarrierTerm",
    "BoxSafeSet",
    "ConstraintRow",
    "assemble_constraints",
    "barrier_values",
    "bound_rows",
    "constraint_row",
    "extended_barrier",
    "ParseError",
    "Scenario",
    "ValidationError",
    "bundled_scenario_names",
    "load_bundled",
    "load_scenario",
    "scenario_from_dict",
]
