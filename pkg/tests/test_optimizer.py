"""Active-set QP and finite-difference SQP.

QP oracles used here are independent of the solver: closed-form
halfspace/box projections, KKT residuals from first principles, and a
two-stage grid search on 2-variable problems (coarse pass over the box,
fine pass around the coarse argmin).
"""

import numpy as np
import pytest

from vicopt.optimizer import (
    NonFiniteCostError,
    QpProblem,
    STATUS_INFEASIBLE,
    STATUS_MAX_ITER,
    STATUS_OPTIMAL,
    STATUS_RELAXED,
    SqpOptions,
    fd_gradient,
    kkt_residual_inequality,
    qp_solve,
    qp_solve_relaxed,
    rows_to_arrays,
    sqp_solve,
)
from vicopt.safety import ConstraintRow


def _objective(H, c, x):
    return 0.5 * x @ H @ x + c @ x


def test_qp_unconstrained_matches_linear_solve():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.normal(size=(4, 4))
        H = a.T @ a + 0.5 * np.eye(4)
        c = rng.normal(size=4)
        rep = qp_solve(QpProblem(H, c))
        np.testing.assert_allclose(rep.solution, np.linalg.solve(H, -c), rtol=1e-9, atol=1e-10)
        assert rep.status == STATUS_OPTIMAL


def test_qp_halfspace_projection_closed_form():
    """min ||x - p||^2 s.t. a.x >= b0 has solution p + (b0 - a.p)/||a||^2 a."""
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = rng.integers(2, 8)
        p = rng.normal(size=n)
        a = rng.normal(size=n)
        b0 = a @ p + rng.uniform(0.1, 2.0)  # strictly violated at p
        rep = qp_solve(QpProblem(2.0 * np.eye(n), -2.0 * p, [ConstraintRow(a=a, b=-b0)]))
        expected = p + (b0 - a @ p) / (a @ a) * a
        np.testing.assert_allclose(rep.solution, expected, rtol=1e-8, atol=1e-9)


def test_qp_box_projection_is_clipping():
    rng = np.random.default_rng(2)
    lo, hi = -1.0, 1.0
    for _ in range(20):
        p = rng.normal(size=6) * 3
        rows = []
        for j in range(6):
            e = np.zeros(6)
            e[j] = 1.0
            rows.append(ConstraintRow(a=e, b=-lo))
            rows.append(ConstraintRow(a=-e, b=hi))
        rep = qp_solve(QpProblem(2.0 * np.eye(6), -2.0 * p, rows))
        np.testing.assert_allclose(rep.solution, np.clip(p, lo, hi), rtol=1e-8, atol=1e-9)


def test_qp_kkt_on_random_psd_problems():
    """First-principles KKT residual below 1e-8 on 60 random problems."""
    rng = np.random.default_rng(3)
    for _ in range(60):
        n = int(rng.integers(2, 10))
        a = rng.normal(size=(n, n))
        H = a.T @ a + 0.1 * np.eye(n)
        c = rng.normal(size=n)
        rows = [ConstraintRow(a=rng.normal(size=n), b=rng.uniform(0.0, 1.0)) for _ in range(int(rng.integers(1, 2 * n)))]
        rep = qp_solve(QpProblem(H, c, rows))
        assert rep.status == STATUS_OPTIMAL
        assert rep.kkt_residual <= 1e-8
        A, b = rows_to_arrays(rows, n)
        assert np.min(A @ rep.solution + b) >= -1e-9


def _grid_min(H, c, rows, lo, hi, n_pts):
    xs = np.linspace(lo[0], hi[0], n_pts)
    ys = np.linspace(lo[1], hi[1], n_pts)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    A, b = rows_to_arrays(rows, 2)
    feas = np.all(P @ A.T + b >= -1e-12, axis=1)
    if not feas.any():
        return None, None
    obj = 0.5 * np.einsum("ij,jk,ik->i", P, H, P) + P @ c
    obj[~feas] = np.inf
    k = int(np.argmin(obj))
    return P[k], float(obj[k])


def test_qp_matches_two_stage_grid_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(12):
        a2 = rng.normal(size=(2, 2))
        H = a2.T @ a2 + 0.2 * np.eye(2)
        c = rng.normal(size=2)
        rows = [ConstraintRow(a=rng.normal(size=2), b=rng.uniform(0.0, 1.0)) for _ in range(4)]
        rows += [
            ConstraintRow(a=np.array([1.0, 0.0]), b=2.0),
            ConstraintRow(a=np.array([-1.0, 0.0]), b=2.0),
            ConstraintRow(a=np.array([0.0, 1.0]), b=2.0),
            ConstraintRow(a=np.array([0.0, -1.0]), b=2.0),
        ]
        x1, _ = _grid_min(H, c, rows, np.array([-2.0, -2.0]), np.array([2.0, 2.0]), 801)
        assert x1 is not None  # origin is feasible by construction (b >= 0)
        d = 4.0 / 800
        _, f_grid = _grid_min(H, c, rows, x1 - 2 * d, x1 + 2 * d, 801)
        rep = qp_solve(QpProblem(H, c, rows))
        f_solver = _objective(H, c, rep.solution)
        assert f_solver <= f_grid + 1e-9
        assert abs(f_solver - f_grid) <= 2e-3
        checked += 1
    assert checked == 12


def test_qp_detects_infeasible_rows():
    rows = [
        ConstraintRow(a=np.array([1.0, 0.0]), b=-1.0),  # x0 >= 1
        ConstraintRow(a=np.array([-1.0, 0.0]), b=0.0),  # x0 <= 0
    ]
    rep = qp_solve(QpProblem(np.eye(2), np.zeros(2), rows))
    assert rep.status == STATUS_INFEASIBLE


def test_qp_relaxed_minimizes_worst_violation():
    """x >= 1 and x <= 0 conflict by 1; the min-max point sits at 0.5 with
    violation 0.5 on both sides."""
    rows = [
        ConstraintRow(a=np.array([1.0]), b=-1.0),
        ConstraintRow(a=np.array([-1.0]), b=0.0),
    ]
    problem = QpProblem(2.0 * np.eye(1), np.zeros(1), rows)
    rep = qp_solve_relaxed(problem, soft=np.array([True, True]))
    assert rep.status == STATUS_RELAXED
    assert rep.solution[0] == pytest.approx(0.5, abs=1e-4)
    assert rep.max_violation == pytest.approx(0.5, abs=1e-4)


def test_qp_relaxed_keeps_hard_rows_exact():
    """Soft rows may yield, hard rows may not."""
    rows = [
        ConstraintRow(a=np.array([1.0]), b=-1.0),   # soft: x >= 1
        ConstraintRow(a=np.array([-1.0]), b=0.25),  # hard: x <= 0.25
    ]
    problem = QpProblem(2.0 * np.eye(1), np.zeros(1), rows)
    rep = qp_solve_relaxed(problem, soft=np.array([True, False]))
    assert rep.solution[0] <= 0.25 + 1e-8
    assert rep.max_violation >= 0.75 - 1e-6


def test_qp_requires_symmetric_hessian():
    H = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        QpProblem(H, np.zeros(2))


def test_fd_gradient_matches_analytic_sin_sum():
    """f(u) = sum sin(u_i): gradient must match cos(u) to 1e-5 relative."""
    rng = np.random.default_rng(8)
    f = lambda u: float(np.sin(u).sum())
    for _ in range(20):
        u = rng.uniform(-1.2, 1.2, 9)
        g = fd_gradient(f, u)
        np.testing.assert_allclose(g, np.cos(u), rtol=1e-5, atol=1e-7)


def test_fd_gradient_respects_bounds():
    """Probe points must stay inside [lo, hi]; the cost asserts it."""
    lo = np.full(3, 1.0)
    hi = np.full(3, 2.0)

    def guarded(u):
        assert np.all(u >= lo - 1e-15) and np.all(u <= hi + 1e-15)
        return float((u**2).sum())

    u0 = np.array([1.0, 1.5, 2.0])  # both bounds active
    g = fd_gradient(guarded, u0, lo=lo, hi=hi)
    np.testing.assert_allclose(g, 2 * u0, rtol=1e-5)


def test_sqp_bounded_quadratic_hits_clipped_solution():
    """min sum d_i (u_i - c_i)^2 under a box: solution is clip(c, lo, hi)."""
    d = np.array([1.0, 4.0, 0.5, 2.0])
    target = np.array([0.5, 3.0, -1.0, 1.2])
    lo = np.full(4, 0.1)
    hi = np.full(4, 2.0)
    rows = []
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1.0
        rows.append(ConstraintRow(a=e, b=-lo[j]))
        rows.append(ConstraintRow(a=-e, b=hi[j]))
    cost = lambda u: float(d @ (u - target) ** 2)
    rep = sqp_solve(cost, np.full(4, 1.0), rows, SqpOptions(max_iter=60), bounds=(lo, hi))
    np.testing.assert_allclose(rep.solution, np.clip(target, lo, hi), atol=1e-5)
    assert rep.cost <= cost(np.full(4, 1.0))


def test_sqp_improves_rosenbrock():
    """No need for the exact optimum, but substantial decrease and
    feasibility are required."""
    cost = lambda u: float((1 - u[0]) ** 2 + 100 * (u[1] - u[0] ** 2) ** 2)
    lo = np.array([-2.0, -2.0])
    hi = np.array([2.0, 2.0])
    rows = [
        ConstraintRow(a=np.array([1.0, 0.0]), b=2.0),
        ConstraintRow(a=np.array([-1.0, 0.0]), b=2.0),
        ConstraintRow(a=np.array([0.0, 1.0]), b=2.0),
        ConstraintRow(a=np.array([0.0, -1.0]), b=2.0),
    ]
    u0 = np.array([-1.2, 1.0])
    rep = sqp_solve(cost, u0, rows, SqpOptions(max_iter=150), bounds=(lo, hi))
    assert rep.cost < 1e-2 * cost(u0)
    assert np.all(rep.solution >= lo - 1e-9) and np.all(rep.solution <= hi + 1e-9)


def test_sqp_projects_infeasible_start():
    rows = [ConstraintRow(a=np.array([1.0, 0.0]), b=-1.0)]  # u0 >= 1
    cost = lambda u: float(((u - np.array([0.0, 0.5])) ** 2).sum())
    rep = sqp_solve(cost, np.array([0.2, 0.5]), rows, SqpOptions(max_iter=40))
    assert rep.solution[0] >= 1.0 - 1e-6
    assert rep.solution[0] == pytest.approx(1.0, abs=1e-4)


def test_sqp_resamples_out_of_nonfinite_region():
    """Cost is infinite below u=1; log-uniform restarts must escape."""

    def cost(u):
        if u[0] < 1.0:
            return float("inf")
        return float((u[0] - 2.0) ** 2)

    lo = np.array([0.1])
    hi = np.array([10.0])
    rows = [ConstraintRow(a=np.array([1.0]), b=-0.1), ConstraintRow(a=np.array([-1.0]), b=10.0)]
    rep = sqp_solve(cost, np.array([0.5]), rows, SqpOptions(max_iter=40, seed=0), bounds=(lo, hi))
    assert np.isfinite(rep.cost)
    assert rep.solution[0] == pytest.approx(2.0, abs=1e-3)


def test_sqp_raises_when_everything_nonfinite():
    cost = lambda u: float("nan")
    rows = [ConstraintRow(a=np.array([1.0]), b=0.0)]
    with pytest.raises(NonFiniteCostError):
        sqp_solve(cost, np.array([1.0]), rows, SqpOptions(max_iter=5, resample_attempts=3), bounds=(np.array([0.1]), np.array([10.0])))


def test_kkt_residual_detects_wrong_multipliers():
    H = 2.0 * np.eye(2)
    c = np.zeros(2)
    A = np.array([[1.0, 0.0]])
    b = np.array([-1.0])  # x0 >= 1
    x = np.array([1.0, 0.0])
    lam_good = np.array([2.0])  # stationarity: Hx + c = A^T lam -> 2 = lam
    assert kkt_residual_inequality(H, c, A, b, x, lam_good) <= 1e-12
    lam_bad = np.array([0.5])
    assert kkt_residual_inequality(H, c, A, b, x, lam_bad) > 0.1


def test_solve_report_statuses_are_strings():
    assert {STATUS_OPTIMAL, STATUS_MAX_ITER, STATUS_INFEASIBLE, STATUS_RELAXED} == {
        "optimal",
        "max_iter",
        "infeasible",
        "relaxed",
    }
