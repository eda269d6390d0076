"""Dense constrained solvers for the two gain-optimization problems.

Two solvers, both deterministic and dependency-free:

* ``qp_solve`` - a primal active-set method for strictly convex QPs with
  inequality rows ``a . x + b >= 0``.  Used by the per-tick safety filter
  (projection of the nominal gain vector onto the constraint set) and as
  the step subproblem inside the SQP loop.  Working-set changes give
  exact complementary slackness, so KKT residuals sit at solver
  precision rather than at an interior-point duality gap.

* ``sqp_solve`` - sequential quadratic programming for the low-frequency
  gain update: central finite-difference gradients, a damped BFGS
  Hessian model, the QP above for the step, and a backtracking Armijo
  line search.  The feasible set here is a polytope (typically just the
  gain box), so unit steps stay feasible and the best feasible iterate
  is returned.

Problems are tiny (18 variables, tens of rows), so dense linear algebra
on the KKT system is the right tool.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .safety import ConstraintRow

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_INFEASIBLE = "infeasible"
STATUS_RELAXED = "relaxed"


class NonFiniteCostError(RuntimeError):
    """Raised when no probe point with a finite cost can be found."""


@dataclass
class QpProblem:
    """min 0.5 x'Hx + c'x  subject to  a_j . x + b_j >= 0 for each row."""

    H: np.ndarray
    c: np.ndarray
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        n = len(self.c)
        if self.H.shape != (n, n):
            raise ValueError("H must be square and consistent with c")
        if np.max(np.abs(self.H - self.H.T)) > 1e-10 * max(1.0, np.max(np.abs(self.H))):
            raise ValueError("H must be symmetric")
        self.H = 0.5 * (self.H + self.H.T)


@dataclass
class SolveReport:
    """Outcome of a QP or SQP solve.

    ``kkt_residual`` is the stationarity/feasibility/complementarity
    residual for QPs and the last step norm for SQP.  ``wall_time`` is
    seconds of wall clock and is never serialized into run artifacts.
    """

    solution: np.ndarray | None
    status: str
    iterations: int
    kkt_residual: float
    wall_time: float
    cost: float = float("nan")
    initial_cost: float = float("nan")
    n_cost_evals: int = 0
    max_violation: float = 0.0


def rows_to_arrays(rows, n: int):
    """Stack constraint rows into (A, b) with A of shape (m, n)."""
    m = len(rows)
    A = np.zeros((m, n))
    b = np.zeros(m)
    for j, r in enumerate(rows):
        a = np.asarray(r.a, dtype=float)
        if a.shape != (n,):
            raise ValueError("row coefficient length does not match problem size")
        A[j] = a
        b[j] = r.b
    return A, b


def kkt_residual_inequality(H, c, A, b, x, lam) -> float:
    """Max KKT violation of (x, lam) for min 0.5x'Hx+c'x, Ax+b>=0, lam>=0."""
    if A.shape[0]:
        stat = np.max(np.abs(H @ x + c - A.T @ lam))
        res = A @ x + b
        primal = max(0.0, -res.min())
        dual = max(0.0, -lam.min())
        comp = np.max(np.abs(lam * res))
        return float(max(stat, primal, dual, comp))
    return float(np.max(np.abs(H @ x + c)))


def _solve_kkt(H, c, Aw, bw):
    nw = Aw.shape[0]
    n = H.shape[0]
    if nw == 0:
        try:
            return np.linalg.solve(H, -c), np.zeros(0)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(H, -c, rcond=None)[0], np.zeros(0)
    K = np.zeros((n + nw, n + nw))
    K[:n, :n] = H
    K[:n, n:] = -Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-c, -bw])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _active_set(H, c, A, b, x0, tol, max_iter):
    """Primal active-set iteration from a feasible x0.

    Returns (x, lam_full, iterations, converged).
    """
    m, n = A.shape
    x = x0.copy()
    in_w = np.zeros(m, dtype=bool)
    work: list[int] = []
    lam_full = np.zeros(m)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x_eq, lam_w = _solve_kkt(H, c, A[work], b[work] if work else np.zeros(0))
        p = x_eq - x
        step = np.max(np.abs(p)) if n else 0.0
        if step <= tol * max(1.0, np.max(np.abs(x))):
            if len(work) == 0 or lam_w.min() >= -tol:
                x = x_eq
                lam_full = np.zeros(m)
                lam_full[work] = lam_w
                converged = True
                break
            j = int(np.argmin(lam_w))
            in_w[work[j]] = False
            work.pop(j)
            continue
        # largest feasible step toward the equality-constrained optimum
        Ap = A @ p
        res = A @ x + b
        alpha = 1.0
        blocker = -1
        for jj in range(m):
            if in_w[jj] or Ap[jj] >= -1e-13:
                continue
            a_j = max(res[jj], 0.0) / (-Ap[jj])
            if a_j < alpha - 1e-15:
                alpha = a_j
                blocker = jj
        x = x + alpha * p
        if blocker >= 0:
            in_w[blocker] = True
            work.append(blocker)
    return x, lam_full, it, converged


def _phase1(A, b, x_ref, feas_tol, max_iter):
    """Feasible-point search: minimize the worst violation with one slack.

    Each round solves min over (x, s) of delta*|x - x_center|^2 + s^2
    subject to a_j.x + b_j + s >= 0 and s >= 0, which always has the
    strictly feasible start (x_center, worst violation + 1).  The
    regularization biases s upward in proportion to how far x must
    travel, so the center is moved to the previous round's point until
    the true violation stops improving.  Returns (x, worst violation
    at x) so the caller judges feasibility on the actual residuals.
    """
    m, n = A.shape
    delta = 1e-8
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = 2.0 * delta * np.eye(n)
    H[n, n] = 2.0
    A_aug = np.zeros((m + 1, n + 1))
    A_aug[:m, :n] = A
    A_aug[:m, n] = 1.0
    A_aug[m, n] = 1.0
    b_aug = np.concatenate([b, [0.0]])

    x = np.asarray(x_ref, dtype=float).copy()
    viol = max(0.0, float(-(A @ x + b).min())) if m else 0.0
    for _ in range(5):
        if viol <= feas_tol:
            break
        c = np.concatenate([-2.0 * delta * x, [0.0]])
        z0 = np.concatenate([x, [viol + 1.0]])
        z, _, _, _ = _active_set(H, c, A_aug, b_aug, z0, 1e-12, max_iter)
        x_new = z[:n]
        viol_new = max(0.0, float(-(A @ x_new + b).min()))
        if viol_new >= 0.5 * viol:
            # stalled: the remaining violation is structural, not bias
            if viol_new < viol:
                x, viol = x_new, viol_new
            break
        x, viol = x_new, viol_new
    return x, viol


def qp_solve(problem: QpProblem, tol: float = 1e-9, max_iter: int = 200, x0=None) -> SolveReport:
    """Solve an inequality-constrained convex QP with an active-set method.

    Statuses: "optimal" (KKT satisfied within tol), "max_iter", or
    "infeasible" when no point satisfies all rows (worst violation above
    tolerance even after minimizing it).
    """
    t_start = time.perf_counter()
    H, c = problem.H, problem.c
    n = len(c)
    A, b = rows_to_arrays(problem.rows, n)
    m = A.shape[0]
    feas_tol = max(tol, 1e-10)

    candidates = []
    if x0 is not None:
        candidates.append(np.asarray(x0, dtype=float))
    try:
        candidates.append(np.linalg.solve(H, -c))
    except np.linalg.LinAlgError:
        pass
    candidates.append(np.zeros(n))

    x_start = None
    for cand in candidates:
        if m == 0 or (A @ cand + b).min() >= -feas_tol:
            x_start = cand.copy()
            break
    if x_start is None:
        x_ref = candidates[0]
        x_start, s_star = _phase1(A, b, x_ref, feas_tol, max_iter)
        if s_star > 1e3 * feas_tol:
            return SolveReport(
                solution=None,
                status=STATUS_INFEASIBLE,
                iterations=0,
                kkt_residual=float("inf"),
                wall_time=time.perf_counter() - t_start,
                max_violation=s_star,
            )

    x, lam, iters, converged = _active_set(H, c, A, b, x_start, tol, max_iter)
    kkt = kkt_residual_inequality(H, c, A, b, x, lam)
    return SolveReport(
        solution=x,
        status=STATUS_OPTIMAL if converged else STATUS_MAX_ITER,
        iterations=iters,
        kkt_residual=kkt,
        wall_time=time.perf_counter() - t_start,
    )


def qp_solve_relaxed(
    problem: QpProblem,
    soft: np.ndarray,
    penalty: float = 1e6,
    x0=None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> SolveReport:
    """Min-max relaxation for an infeasible QP: soften the marked rows
    with one shared slack s >= 0 under a large quadratic penalty.

    Rows with ``soft[j]`` False (e.g. the gain box) stay hard, so ``x0``
    must satisfy them.  The returned status is "relaxed" and
    ``max_violation`` reports the optimal slack.
    """
    H, c = problem.H, problem.c
    n = len(c)
    A, b = rows_to_arrays(problem.rows, n)
    m = A.shape[0]
    soft = np.asarray(soft, dtype=bool)
    if soft.shape != (m,):
        raise ValueError("soft mask must have one entry per row")
    t_start = time.perf_counter()

    H_aug = np.zeros((n + 1, n + 1))
    H_aug[:n, :n] = H
    H_aug[n, n] = 2.0 * penalty
    c_aug = np.concatenate([c, [0.0]])
    A_aug = np.zeros((m + 1, n + 1))
    A_aug[:m, :n] = A
    A_aug[:m, n] = soft.astype(float)
    A_aug[m, n] = 1.0
    b_aug = np.concatenate([b, [0.0]])

    if x0 is None:
        x0, s_hard = _phase1(A[~soft], b[~soft], np.zeros(n), max(tol, 1e-10), max_iter)
        if s_hard > 1e3 * max(tol, 1e-10):
            return SolveReport(
                solution=None,
                status=STATUS_INFEASIBLE,
                iterations=0,
                kkt_residual=float("inf"),
                wall_time=time.perf_counter() - t_start,
                max_violation=s_hard,
            )
    x0 = np.asarray(x0, dtype=float)
    res = A @ x0 + b
    viol = -(res[soft].min()) if soft.any() else 0.0
    z0 = np.concatenate([x0, [max(viol, 0.0) + 1.0]])
    z, lam, iters, converged = _active_set(H_aug, c_aug, A_aug, b_aug, z0, tol, max_iter)
    kkt = kkt_residual_inequality(H_aug, c_aug, A_aug, b_aug, z, lam)
    return SolveReport(
        solution=z[:n],
        status=STATUS_RELAXED if converged else STATUS_MAX_ITER,
        iterations=iters,
        kkt_residual=kkt,
        wall_time=time.perf_counter() - t_start,
        max_violation=float(max(z[n], 0.0)),
    )


def fd_gradient(cost, u, lo=None, hi=None, rel_step: float = 1e-5, f0=None) -> np.ndarray:
    """Central finite-difference gradient with componentwise relative steps.

    Step per component is rel_step * max(1, |u_i|); probes are clamped
    into [lo, hi] (falling back to one-sided differences at a bound or
    when a probe returns a non-finite cost).
    """
    u = np.asarray(u, dtype=float)
    n = len(u)
    g = np.zeros(n)

    def center():
        nonlocal f0
        if f0 is None:
            f0 = float(cost(u))
        return f0 if np.isfinite(f0) else None

    for i in range(n):
        h = rel_step * max(1.0, abs(u[i]))
        ui_up = u[i] + h if hi is None else min(u[i] + h, hi[i])
        ui_dn = u[i] - h if lo is None else max(u[i] - h, lo[i])
        up = u.copy()
        up[i] = ui_up
        dn = u.copy()
        dn[i] = ui_dn
        fu = float(cost(up)) if ui_up > u[i] else None
        fd = float(cost(dn)) if ui_dn < u[i] else None
        fu_ok = fu is not None and np.isfinite(fu)
        fd_ok = fd is not None and np.isfinite(fd)
        if fu_ok and fd_ok:
            g[i] = (fu - fd) / (ui_up - ui_dn)
        elif fu_ok and center() is not None:
            g[i] = (fu - f0) / (ui_up - u[i])
        elif fd_ok and center() is not None:
            g[i] = (f0 - fd) / (u[i] - ui_dn)
        else:
            g[i] = 0.0
    return g


def _damped_bfgs(B, s, y):
    # Powell's damping keeps the model positive definite even when the
    # sampled curvature s.y is negative.
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-16:
        return B
    sy = float(s @ y)
    theta = 1.0 if sy >= 0.2 * sBs else 0.8 * sBs / (sBs - sy)
    r = theta * y + (1.0 - theta) * Bs
    sr = float(s @ r)
    if sr <= 1e-16:
        return B
    B = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr
    return 0.5 * (B + B.T)


@dataclass
class SqpOptions:
    max_iter: int = 50
    step_tol: float = 1e-8
    fd_rel_step: float = 1e-5
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 22
    resample_attempts: int = 10
    seed: int = 0


def sqp_solve(cost, u0, rows, opts: SqpOptions | None = None, bounds=None) -> SolveReport:
    """Minimize a black-box cost over the polytope given by ``rows``.

    ``bounds`` is an optional (lo, hi) pair used for clamping gradient
    probes and for re-sampling the start when cost(u0) is non-finite
    (log-uniform within the box, seeded).  Raises NonFiniteCostError if
    no finite starting cost can be found.  Returns the best feasible
    iterate; status "optimal" means the last QP step was below step_tol.
    """
    opts = opts or SqpOptions()
    t_start = time.perf_counter()
    u = np.asarray(u0, dtype=float).copy()
    n = len(u)
    A, b = rows_to_arrays(rows, n)
    m = A.shape[0]
    lo, hi = (None, None) if bounds is None else bounds
    n_evals = 0

    def f(x):
        nonlocal n_evals
        n_evals += 1
        return float(cost(x))

    # start inside the feasible polytope
    if m and (A @ u + b).min() < -1e-9:
        proj = qp_solve(QpProblem(2.0 * np.eye(n), -2.0 * u, list(rows)), x0=None)
        if proj.solution is None:
            return SolveReport(None, STATUS_INFEASIBLE, 0, float("inf"),
                               time.perf_counter() - t_start)
        u = proj.solution

    f_u = f(u)
    if not np.isfinite(f_u):
        rng = np.random.default_rng(opts.seed)
        found = False
        if lo is not None and hi is not None and np.all(np.asarray(lo) > 0):
            log_lo = np.log(np.asarray(lo, dtype=float))
            log_hi = np.log(np.asarray(hi, dtype=float))
            for _ in range(opts.resample_attempts):
                cand = np.exp(rng.uniform(log_lo, log_hi))
                if m and (A @ cand + b).min() < -1e-9:
                    continue
                fc = f(cand)
                if np.isfinite(fc):
                    u, f_u = cand, fc
                    found = True
                    break
        if not found:
            raise NonFiniteCostError("cost is non-finite at every probed start")

    initial_cost = f_u
    best_u, best_f = u.copy(), f_u
    g = fd_gradient(f, u, lo, hi, opts.fd_rel_step, f0=f_u)
    B = np.eye(n)
    status = STATUS_MAX_ITER
    last_step = float("inf")
    iters = 0
    for _ in range(opts.max_iter):
        iters += 1
        shifted = [ConstraintRow(A[j], float(A[j] @ u + b[j])) for j in range(m)]
        rep = qp_solve(QpProblem(B, g, shifted), x0=np.zeros(n))
        if rep.solution is None:
            break
        p = rep.solution
        last_step = float(np.max(np.abs(p)))
        if last_step <= opts.step_tol:
            status = STATUS_OPTIMAL
            break
        slope = float(g @ p)
        if slope >= 0.0:
            # model no longer produces descent; accept the current best
            status = STATUS_OPTIMAL if last_step <= 1e-6 else STATUS_MAX_ITER
            break
        alpha = 1.0
        accepted = False
        f_trial = f_u
        for _bt in range(opts.max_backtracks):
            u_trial = u + alpha * p
            f_trial = f(u_trial)
            if np.isfinite(f_trial) and f_trial <= f_u + opts.armijo * alpha * slope:
                accepted = True
                break
            alpha *= opts.backtrack
        if not accepted:
            break
        s = alpha * p
        u = u + s
        f_u = f_trial
        if f_u < best_f:
            best_f = f_u
            best_u = u.copy()
        g_new = fd_gradient(f, u, lo, hi, opts.fd_rel_step, f0=f_u)
        B = _damped_bfgs(B, s, g_new - g)
        g = g_new

    return SolveReport(
        solution=best_u,
        status=status,
        iterations=iters,
        kkt_residual=last_step,
        wall_time=time.perf_counter() - t_start,
        cost=best_f,
        initial_cost=initial_cost,
        n_cost_evals=n_evals,
    )
