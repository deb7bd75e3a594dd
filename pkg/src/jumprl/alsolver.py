"""Self-contained NLP solver: augmented Lagrangian outer loop.

Solves
    min f(x)   s.t.  c_eq(x) = 0,  c_ineq(x) >= 0

using the Powell-Hestenes-Rockafellar augmented Lagrangian with safeguarded
multiplier updates (the penalty grows only when feasibility stalls). The
subproblems are minimized by a damped Gauss-Newton method that exploits the
rho * J^T J structure of the penalty terms; this stays effective when the
penalty makes the subproblem badly conditioned, where limited-memory
quasi-Newton methods crawl. A generic L-BFGS minimizer is also provided and
can be selected as the inner solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NlpProblem:
    """Callback bundle defining one NLP instance.

    All callbacks take the flat decision vector. Jacobians are dense,
    shaped (n_constraints, n_vars). Either constraint block may be empty.
    `hessian`, when provided, returns the dense objective Hessian and
    sharpens the Gauss-Newton inner model; it is optional.
    """

    n_vars: int
    objective: callable
    gradient: callable
    eq_constraints: callable = None
    eq_jacobian: callable = None
    ineq_constraints: callable = None
    ineq_jacobian: callable = None
    hessian: callable = None

    def eval_eq(self, x):
        if self.eq_constraints is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.eq_constraints(x), dtype=float))

    def eval_ineq(self, x):
        if self.ineq_constraints is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.ineq_constraints(x), dtype=float))


@dataclass
class SolverOptions:
    constraint_tol: float = 1e-8
    grad_tol: float = 1e-6
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    max_penalty: float = 1e12
    max_outer: int = 40
    max_inner: int = 200
    lbfgs_memory: int = 15
    feasibility_decrease: float = 0.5
    multiplier_bound: float = 1e10
    inner: str = "gauss_newton"  # or "lbfgs"


@dataclass
class SolverResult:
    x: np.ndarray
    converged: bool
    objective: float
    constraint_violation: float
    grad_norm: float
    outer_iterations: int
    inner_iterations: int
    penalty: float
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def lbfgs_minimize(fun, grad, x0, tol=1e-8, max_iter=400, memory=15):
    """Unconstrained L-BFGS with Armijo backtracking.

    Returns (x, f, g, n_iter). Stops on ||g||_inf <= tol, iteration cap,
    or a failed line search after a steepest-descent restart.
    """
    x = np.asarray(x0, dtype=float).copy()
    f = float(fun(x))
    g = np.asarray(grad(x), dtype=float)
    s_hist, y_hist, rho_hist = [], [], []
    n_iter = 0
    restarted = False
    while n_iter < max_iter and np.abs(g).max() > tol:
        d = _two_loop_direction(g, s_hist, y_hist, rho_hist)
        gd = float(g @ d)
        if gd >= 0.0:
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            d = -g
            gd = -float(g @ g)
        step = 1.0
        f_new = None
        for _ in range(60):
            x_new = x + step * d
            f_try = float(fun(x_new))
            if np.isfinite(f_try) and f_try <= f + 1e-4 * step * gd:
                f_new = f_try
                break
            step *= 0.5
        if f_new is None:
            if restarted:
                break
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            restarted = True
            n_iter += 1
            continue
        restarted = False
        g_new = np.asarray(grad(x_new), dtype=float)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        n_iter += 1
    return x, f, g, n_iter


def _two_loop_direction(g, s_hist, y_hist, rho_hist):
    q = -g.copy()
    if not s_hist:
        return q
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def _newton_minimize(value, grad, gn_hessian, x0, tol, max_iter):
    """Damped (Levenberg) Newton on a Gauss-Newton model of the AL."""
    x = np.asarray(x0, dtype=float).copy()
    f = float(value(x))
    g = grad(x)
    nu = 1e-8
    n_iter = 0
    eye = np.eye(x.size)
    while n_iter < max_iter and np.abs(g).max() > tol:
        h = gn_hessian(x)
        d = None
        for _ in range(30):
            try:
                chol = np.linalg.cholesky(h + nu * eye)
            except np.linalg.LinAlgError:
                nu = max(nu * 10.0, 1e-10)
                continue
            d = np.linalg.solve(chol.T, np.linalg.solve(chol, -g))
            break
        if d is None:
            break
        gd = float(g @ d)
        step = 1.0
        improved = False
        for _ in range(40):
            x_new = x + step * d
            f_try = float(value(x_new))
            if np.isfinite(f_try) and f_try <= f + 1e-4 * step * gd:
                improved = True
                break
            step *= 0.5
        if not improved:
            nu *= 10.0
            if nu > 1e12:
                break
            n_iter += 1
            continue
        if step >= 0.99:
            nu = max(nu * 0.25, 1e-10)
        else:
            nu *= 2.0
        x, f = x_new, f_try
        g = grad(x)
        n_iter += 1
    return x, f, g, n_iter


def solve_augmented_lagrangian(problem, x0, options=None, warm_start=None):
    """Solve an NlpProblem; optionally warm-start multipliers and penalty.

    Args:
        problem: NlpProblem with analytic gradient/Jacobians.
        x0: initial decision vector.
        options: SolverOptions.
        warm_start: optional (eq_multipliers, ineq_multipliers, penalty)
            tuple, e.g. from a previous SolverResult.

    Returns:
        SolverResult. `converged` requires both feasibility and a
        stationary inner solve at the final multipliers.
    """
    opt = options or SolverOptions()
    x = np.asarray(x0, dtype=float).copy()
    n_eq = problem.eval_eq(x).size
    n_ineq = problem.eval_ineq(x).size
    if warm_start is not None:
        lam = np.asarray(warm_start[0], dtype=float).copy()
        mu = np.asarray(warm_start[1], dtype=float).copy()
        rho = float(warm_start[2])
    else:
        lam = np.zeros(n_eq)
        mu = np.zeros(n_ineq)
        rho = opt.initial_penalty

    def al_value(xv):
        val = problem.objective(xv)
        if n_eq:
            c = problem.eval_eq(xv)
            val += -lam @ c + 0.5 * rho * (c @ c)
        if n_ineq:
            gI = problem.eval_ineq(xv)
            t = np.maximum(0.0, mu - rho * gI)
            val += (t @ t - mu @ mu) / (2.0 * rho)
        return val

    def al_grad(xv):
        gr = np.asarray(problem.gradient(xv), dtype=float).copy()
        if n_eq:
            c = problem.eval_eq(xv)
            gr += problem.eq_jacobian(xv).T @ (rho * c - lam)
        if n_ineq:
            gI = problem.eval_ineq(xv)
            t = np.maximum(0.0, mu - rho * gI)
            gr -= problem.ineq_jacobian(xv).T @ t
        return gr

    def al_gn_hessian(xv):
        n = problem.n_vars
        if problem.hessian is not None:
            h = np.asarray(problem.hessian(xv), dtype=float).copy()
        else:
            h = np.zeros((n, n))
        if n_eq:
            je = problem.eq_jacobian(xv)
            h += rho * je.T @ je
        if n_ineq:
            gI = problem.eval_ineq(xv)
            active = (mu - rho * gI) > 0.0
            if np.any(active):
                ja = problem.ineq_jacobian(xv)[active]
                h += rho * ja.T @ ja
        return h

    def infeasibility(xv):
        v = 0.0
        if n_eq:
            v = max(v, np.abs(problem.eval_eq(xv)).max())
        if n_ineq:
            gI = problem.eval_ineq(xv)
            v = max(v, np.abs(np.minimum(gI, mu / rho)).max() if gI.size else 0.0)
        return v

    inner_tol = max(opt.grad_tol, 1e-3)
    total_inner = 0
    prev_infeas = np.inf
    best = (np.inf, x.copy())
    outer = 0
    for outer in range(1, opt.max_outer + 1):
        if opt.inner == "lbfgs":
            x, _, g, it = lbfgs_minimize(
                al_value, al_grad, x, tol=inner_tol,
                max_iter=max(opt.max_inner, 600), memory=opt.lbfgs_memory,
            )
        else:
            x, _, g, it = _newton_minimize(
                al_value, al_grad, al_gn_hessian, x, tol=inner_tol,
                max_iter=opt.max_inner,
            )
        total_inner += it
        infeas = infeasibility(x)
        if infeas < best[0]:
            best = (infeas, x.copy())
        grad_norm = float(np.abs(g).max())
        if infeas <= opt.constraint_tol and grad_norm <= opt.grad_tol:
            return SolverResult(
                x=x, converged=True, objective=float(problem.objective(x)),
                constraint_violation=infeas, grad_norm=grad_norm,
                outer_iterations=outer, inner_iterations=total_inner,
                penalty=rho, eq_multipliers=lam, ineq_multipliers=mu,
            )
        # first-order multiplier update every outer iteration; the penalty
        # grows only when feasibility progress stalls (Birgin-Martinez style)
        if n_eq:
            c = problem.eval_eq(x)
            lam = np.clip(lam - rho * c, -opt.multiplier_bound, opt.multiplier_bound)
        if n_ineq:
            gI = problem.eval_ineq(x)
            mu = np.clip(np.maximum(0.0, mu - rho * gI), 0.0, opt.multiplier_bound)
        if infeas > opt.feasibility_decrease * prev_infeas and infeas > opt.constraint_tol:
            rho = min(rho * opt.penalty_growth, opt.max_penalty)
        prev_infeas = infeas
        inner_tol = max(opt.grad_tol, inner_tol * 0.1)

    x = best[1]
    return SolverResult(
        x=x, converged=False, objective=float(problem.objective(x)),
        constraint_violation=infeasibility(x),
        grad_norm=float(np.abs(al_grad(x)).max()),
        outer_iterations=outer, inner_iterations=total_inner,
        penalty=rho, eq_multipliers=lam, ineq_multipliers=mu,
    )
