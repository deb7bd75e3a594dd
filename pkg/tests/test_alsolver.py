import numpy as np
import pytest

from jumprl.alsolver import (
    NlpProblem,
    SolverOptions,
    lbfgs_minimize,
    solve_augmented_lagrangian,
)


class TestLbfgsCore:
    def test_quadratic_exact_minimizer(self):
        # minimizer of 0.5 x'Ax - b'x is A^{-1} b
        rng = np.random.default_rng(0)
        m = rng.standard_normal((6, 6))
        a = m @ m.T + 6 * np.eye(6)
        b = rng.standard_normal(6)
        x_star = np.linalg.solve(a, b)
        x, _, _, _ = lbfgs_minimize(
            lambda x: 0.5 * x @ a @ x - b @ x,
            lambda x: a @ x - b,
            np.zeros(6),
            tol=1e-12,
        )
        assert np.abs(x - x_star).max() < 1e-10

    def test_rosenbrock(self):
        def f(x):
            return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2

        def g(x):
            return np.array(
                [
                    -400.0 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]),
                    200.0 * (x[1] - x[0] ** 2),
                ]
            )

        x, _, _, _ = lbfgs_minimize(f, g, np.array([-1.2, 1.0]), tol=1e-10, max_iter=2000)
        assert np.abs(x - 1.0).max() < 1e-6


class TestAugmentedLagrangian:
    def test_equality_constrained_quadratic(self):
        # min x^2 + y^2 s.t. x + y = 1 -> (0.5, 0.5)
        prob = NlpProblem(
            n_vars=2,
            objective=lambda x: float(x @ x),
            gradient=lambda x: 2.0 * x,
            eq_constraints=lambda x: np.array([x[0] + x[1] - 1.0]),
            eq_jacobian=lambda x: np.array([[1.0, 1.0]]),
            hessian=lambda x: 2.0 * np.eye(2),
        )
        res = solve_augmented_lagrangian(prob, np.zeros(2))
        assert res.converged
        assert np.abs(res.x - 0.5).max() < 1e-7
        assert res.constraint_violation < 1e-8

    def test_inequality_active_at_solution(self):
        # min (x-2)^2 s.t. 1 - x >= 0 -> x = 1
        prob = NlpProblem(
            n_vars=1,
            objective=lambda x: float((x[0] - 2.0) ** 2),
            gradient=lambda x: np.array([2.0 * (x[0] - 2.0)]),
            ineq_constraints=lambda x: np.array([1.0 - x[0]]),
            ineq_jacobian=lambda x: np.array([[-1.0]]),
        )
        res = solve_augmented_lagrangian(prob, np.array([0.0]))
        assert res.converged
        assert res.x[0] == pytest.approx(1.0, abs=1e-6)

    def test_inactive_inequality_ignored(self):
        # min (x-0.2)^2 s.t. 1 - x >= 0 -> unconstrained optimum; no hessian
        # callback supplied, so precision is set by the gradient tolerance
        prob = NlpProblem(
            n_vars=1,
            objective=lambda x: float((x[0] - 0.2) ** 2),
            gradient=lambda x: np.array([2.0 * (x[0] - 0.2)]),
            ineq_constraints=lambda x: np.array([1.0 - x[0]]),
            ineq_jacobian=lambda x: np.array([[-1.0]]),
        )
        res = solve_augmented_lagrangian(prob, np.array([5.0]))
        assert res.converged
        assert res.x[0] == pytest.approx(0.2, abs=1e-6)

    def test_infeasible_problem_reports_failure(self):
        # x >= 1 and x <= 0 cannot both hold
        prob = NlpProblem(
            n_vars=1,
            objective=lambda x: float(x[0] ** 2),
            gradient=lambda x: np.array([2.0 * x[0]]),
            ineq_constraints=lambda x: np.array([x[0] - 1.0, -x[0]]),
            ineq_jacobian=lambda x: np.array([[1.0], [-1.0]]),
        )
        res = solve_augmented_lagrangian(
            prob, np.array([0.5]), SolverOptions(max_outer=12)
        )
        assert not res.converged
        assert res.constraint_violation > 1e-3

    def test_warm_start_uses_fewer_outer_iterations(self):
        # mildly nonlinear equality-constrained problem
        def c(x):
            return np.array([x[0] ** 2 + x[1] ** 2 - 1.0])

        def jc(x):
            return np.array([[2.0 * x[0], 2.0 * x[1]]])

        prob = NlpProblem(
            n_vars=2,
            objective=lambda x: float((x[0] - 2.0) ** 2 + (x[1] - 0.5) ** 2),
            gradient=lambda x: np.array([2 * (x[0] - 2.0), 2 * (x[1] - 0.5)]),
            eq_constraints=c,
            eq_jacobian=jc,
        )
        cold = solve_augmented_lagrangian(prob, np.array([0.1, 0.1]))
        assert cold.converged
        warm = solve_augmented_lagrangian(
            prob,
            cold.x,
            warm_start=(cold.eq_multipliers, cold.ineq_multipliers, cold.penalty),
        )
        assert warm.converged
        assert warm.outer_iterations < cold.outer_iterations
