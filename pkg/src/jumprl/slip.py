"""Actuated-SLIP jump trajectory optimization.

The stance phase is transcribed by trapezoidal direct collocation on the
point-mass CoM states with piecewise-constant actuation forces; the flight
phase is the analytic ballistic arc and enters only through the takeoff
waypoint constraints. The takeoff CoM is pinned horizontally above the start
so the ballistic arc covers exactly the commanded displacement.

All constraint Jacobians are analytic; tests check them against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alsolver import NlpProblem, SolverOptions, solve_augmented_lagrangian

_GRAV = np.array([0.0, 0.0, -1.0])


@dataclass
class JumpTask:
    """One jump command: where to land, starting from a nominal stand."""

    target_displacement: np.ndarray = field(
        default_factory=lambda: np.array([0.4, 0.0])
    )
    initial_com_height: float = 0.32
    landing_com_height: float = 0.28  # crouched landing pose
    stance_duration_hint: float = 0.5
    flight_apex_hint: float = 0.10

    def __post_init__(self):
        self.target_displacement = np.asarray(self.target_displacement, dtype=float)
        if self.initial_com_height <= 0.0:
            raise ValueError("initial_com_height must be positive")



@dataclass
class SlipParams:
    """Point-mass jump model parameters. Leg mass is ignored."""

    point_mass: float = 12.0
    gravity: float = 9.81
    leg_natural_length: float = 0.32
    parallel_stiffness: float = 0.0  # N/m along the virtual leg; 0 = rigid
    force_limit: float = 300.0
    friction_coeff: float = 0.6  # ground force must stay inside this pyramid
    num_stance_knots: int = 16
    min_com_height: float = 0.23
    max_leg_extension: float = 0.413  # 0.97 * full leg reach by default
    stance_bounds: tuple = (0.40, 0.80)
    flight_bounds: tuple = (0.30, 0.95)
    force_weight: float = 1e-4
    smoothness_weight: float = 1e-6
    force_scale: float = 100.0  # decision-variable scaling for u

    def __post_init__(self):
        if self.point_mass <= 0.0:
            raise ValueError("point_mass must be positive")
        if self.num_stance_knots < 4:
            raise ValueError("num_stance_knots must be >= 4")


@dataclass
class NlpSolution:
    """Converged (or best-effort) stance trajectory plus flight data."""

    stance_positions: np.ndarray  # (N+1, 3)
    stance_velocities: np.ndarray  # (N+1, 3)
    stance_inputs: np.ndarray  # (N, 3)
    stance_duration: float
    flight_duration: float
    objective_value: float
    converged: bool
    max_defect: float
    constraint_violation: float
    outer_iterations: int
    multipliers: tuple = None
    task: JumpTask = None
    slip: SlipParams = None

    @property
    def takeoff_position(self):
        return self.stance_positions[-1]

    @property
    def takeoff_velocity(self):
        return self.stance_velocities[-1]

    @property
    def landing_position(self):
        t = self.flight_duration
        g = self.slip.gravity if self.slip is not None else 9.81
        return self.takeoff_position + self.takeoff_velocity * t + 0.5 * g * _GRAV * t * t


class SlipNlp:
    """Direct-collocation transcription of one jump task.

    Decision vector layout: stance positions (N+1,3), stance velocities
    (N+1,3), scaled inputs (N,3), stance duration, flight duration.
    """

    def __init__(self, task, slip):
        self.task = task
        self.slip = slip
        n = slip.num_stance_knots
        self.n_knots = n + 1
        self.n_vars = 6 * self.n_knots + 3 * n + 2
        self.p_start = np.array([0.0, 0.0, task.initial_com_height])
        self.foot = np.array([0.0, 0.0, 0.0])
        self.z_land = task.landing_com_height
        self._iu = 6 * self.n_knots

    # -- decision vector helpers ------------------------------------------

    def unpack(self, x):
        nk = self.n_knots
        pos = x[: 3 * nk].reshape(nk, 3)
        vel = x[3 * nk : 6 * nk].reshape(nk, 3)
        u = x[self._iu : self._iu + 3 * (nk - 1)].reshape(nk - 1, 3) * self.slip.force_scale
        return pos, vel, u, x[-2], x[-1]

    def pack(self, pos, vel, u, t_stance, t_flight):
        return np.concatenate(
            [
                pos.ravel(),
                vel.ravel(),
                (u / self.slip.force_scale).ravel(),
                [t_stance, t_flight],
            ]
        )

    def initial_guess(self):
        """Smooth squat-and-extend guess; inputs from inverse dynamics."""
        task, slip = self.task, self.slip
        n = slip.num_stance_knots
        t_s = float(np.clip(task.stance_duration_hint, *slip.stance_bounds))
        vz_to = np.sqrt(2.0 * slip.gravity * max(task.flight_apex_hint, 0.01))
        z0 = task.initial_com_height
        z_to = min(z0 + 0.06, slip.max_leg_extension - 0.01)
        disc = vz_to**2 + 2.0 * slip.gravity * (z_to - self.z_land)
        t_f = (vz_to + np.sqrt(max(disc, 1e-6))) / slip.gravity
        t_f = float(np.clip(t_f, *slip.flight_bounds))

        s = np.linspace(0.0, 1.0, self.n_knots)
        h = t_s / n
        depth = max(z0 - slip.min_com_height - 0.02, 0.04)
        z = z0 + (z_to - z0) * (3 * s**2 - 2 * s**3) - depth * np.sin(np.pi * s) ** 2
        pos = np.tile(self.p_start, (self.n_knots, 1))
        pos[:, 2] = z
        vel = np.zeros_like(pos)
        vel[1:-1, 2] = (z[2:] - z[:-2]) / (2 * h)
        vel[-1, 2] = vz_to
        v_xy_to = self.task.target_displacement / t_f
        ramp = s**2
        vel[:, 0] = v_xy_to[0] * ramp
        vel[:, 1] = v_xy_to[1] * ramp
        # integrate the horizontal ramp so the position guess is consistent
        for axis in (0, 1):
            pos[1:, axis] += np.cumsum(0.5 * h * (vel[:-1, axis] + vel[1:, axis]))
        acc = np.zeros_like(pos)
        acc[:-1] = (vel[1:] - vel[:-1]) / h
        u = slip.point_mass * (acc[:-1] - slip.gravity * _GRAV) - self._spring_force(pos[:-1])
        u = np.clip(u, -0.9 * slip.force_limit, 0.9 * slip.force_limit)
        return self.pack(pos, vel, u, t_s, t_f)

    # -- model pieces -----------------------------------------------------

    def _spring_force(self, pos):
        """Virtual-leg parallel spring force at each row of `pos`."""
        k = self.slip.parallel_stiffness
        if k == 0.0:
            return np.zeros_like(pos)
        r = pos - self.foot
        l = np.linalg.norm(r, axis=-1, keepdims=True)
        return k * (self.slip.leg_natural_length - l) * r / l

    def _spring_jacobians(self, pos):
        """(n, 3, 3) d(spring force)/d(position) at each row."""
        n = pos.shape[0]
        k = self.slip.parallel_stiffness
        if k == 0.0:
            return np.zeros((n, 3, 3))
        r = pos - self.foot
        l = np.linalg.norm(r, axis=-1)
        uhat = r / l[:, None]
        l0 = self.slip.leg_natural_length
        eye = np.eye(3)
        out = np.empty((n, 3, 3))
        for i in range(n):
            out[i] = k * ((l0 / l[i] - 1.0) * eye - (l0 / l[i]) * np.outer(uhat[i], uhat[i]))
        return out

    def _accel(self, pos, u):
        g = self.slip.gravity
        return (u + self._spring_force(pos)) / self.slip.point_mass + g * _GRAV

    # -- objective ---------------------------------------------------------

    def objective(self, x):
        _, _, u, t_s, _ = self.unpack(x)
        slip = self.slip
        h = t_s / slip.num_stance_knots
        val = slip.force_weight * h * float(np.sum(u * u))
        du = np.diff(u, axis=0)
        val += slip.smoothness_weight * float(np.sum(du * du))
        return val

    def gradient(self, x):
        _, _, u, t_s, _ = self.unpack(x)
        slip = self.slip
        n = slip.num_stance_knots
        h = t_s / n
        grad = np.zeros(self.n_vars)
        gu = 2.0 * slip.force_weight * h * u
        du = np.diff(u, axis=0)
        gu[:-1] -= 2.0 * slip.smoothness_weight * du
        gu[1:] += 2.0 * slip.smoothness_weight * du
        grad[self._iu : self._iu + 3 * n] = (gu * slip.force_scale).ravel()
        grad[-2] = slip.force_weight * float(np.sum(u * u)) / n
        return grad

    # -- equality constraints ----------------------------------------------

    def eq_constraints(self, x):
        pos, vel, u, t_s, t_f = self.unpack(x)
        slip = self.slip
        n = slip.num_stance_knots
        h = t_s / n
        acc = self._accel(pos, np.vstack([u, u[-1]]))
        acc_lo = self._accel(pos[:-1], u)
        acc_hi = self._accel(pos[1:], u)
        d_pos = pos[1:] - pos[:-1] - 0.5 * h * (vel[:-1] + vel[1:])
        d_vel = vel[1:] - vel[:-1] - 0.5 * h * (acc_lo + acc_hi)
        g = slip.gravity
        ballistic = np.empty(3)
        ballistic[:2] = vel[-1, :2] * t_f - self.task.target_displacement
        ballistic[2] = pos[-1, 2] + vel[-1, 2] * t_f - 0.5 * g * t_f * t_f - self.z_land
        return np.concatenate(
            [
                pos[0] - self.p_start,
                vel[0],
                d_pos.ravel(),
                d_vel.ravel(),
                ballistic,
            ]
        )

    def eq_jacobian(self, x):
        pos, vel, u, t_s, t_f = self.unpack(x)
        slip = self.slip
        n = slip.num_stance_knots
        nk = self.n_knots
        h = t_s / n
        m = slip.point_mass
        us = slip.force_scale
        n_eq = 6 + 6 * n + 3
        jac = np.zeros((n_eq, self.n_vars))

        def ip(i):
            return 3 * i

        def iv(i):
            return 3 * nk + 3 * i

        def iu(i):
            return self._iu + 3 * i

        eye = np.eye(3)
        row = 0
        jac[row : row + 3, ip(0) : ip(0) + 3] = eye
        row += 3
        jac[row : row + 3, iv(0) : iv(0) + 3] = eye
        row += 3

        vel_sum = vel[:-1] + vel[1:]
        for i in range(n):
            r = row + 3 * i
            jac[r : r + 3, ip(i + 1) : ip(i + 1) + 3] = eye
            jac[r : r + 3, ip(i) : ip(i) + 3] = -eye
            jac[r : r + 3, iv(i) : iv(i) + 3] = -0.5 * h * eye
            jac[r : r + 3, iv(i + 1) : iv(i + 1) + 3] = -0.5 * h * eye
            jac[r : r + 3, -2] = -vel_sum[i] / (2.0 * n)
        row += 3 * n

        dfs = self._spring_jacobians(pos)
        acc_lo = self._accel(pos[:-1], u)
        acc_hi = self._accel(pos[1:], u)
        acc_sum = acc_lo + acc_hi
        for i in range(n):
            r = row + 3 * i
            jac[r : r + 3, iv(i + 1) : iv(i + 1) + 3] = eye
            jac[r : r + 3, iv(i) : iv(i) + 3] = -eye
            jac[r : r + 3, ip(i) : ip(i) + 3] = -0.5 * h * dfs[i] / m
            jac[r : r + 3, ip(i + 1) : ip(i + 1) + 3] = -0.5 * h * dfs[i + 1] / m
            jac[r : r + 3, iu(i) : iu(i) + 3] = -(h / m) * us * eye
            jac[r : r + 3, -2] = -acc_sum[i] / (2.0 * n)
        row += 3 * n

        g = slip.gravity
        jac[row, iv(nk - 1)] = t_f
        jac[row, -1] = vel[-1, 0]
        jac[row + 1, iv(nk - 1) + 1] = t_f
        jac[row + 1, -1] = vel[-1, 1]
        jac[row + 2, ip(nk - 1) + 2] = 1.0
        jac[row + 2, iv(nk - 1) + 2] = t_f
        jac[row + 2, -1] = vel[-1, 2] - g * t_f
        return jac

    # -- inequality constraints (g(x) >= 0) ---------------------------------

    def ineq_constraints(self, x):
        pos, vel, u, t_s, t_f = self.unpack(x)
        slip = self.slip
        fs = self._spring_force(pos[:-1])
        ground = u + fs  # total force the leg transmits to the CoM
        mu = slip.friction_coeff
        r = pos - self.foot
        reach_sq = slip.max_leg_extension**2 - np.sum(r * r, axis=1)
        pyramid = np.concatenate(
            [
                mu * ground[:, 2] - ground[:, 0],
                mu * ground[:, 2] + ground[:, 0],
                mu * ground[:, 2] - ground[:, 1],
                mu * ground[:, 2] + ground[:, 1],
            ]
        )
        return np.concatenate(
            [
                (slip.force_limit - u).ravel(),
                (slip.force_limit + u).ravel(),
                ground[:, 2],
                pyramid,
                reach_sq,
                pos[:, 2] - slip.min_com_height,
                [
                    t_s - slip.stance_bounds[0],
                    slip.stance_bounds[1] - t_s,
                    t_f - slip.flight_bounds[0],
                    slip.flight_bounds[1] - t_f,
                ],
            ]
        )

    def ineq_jacobian(self, x):
        pos, vel, u, t_s, t_f = self.unpack(x)
        slip = self.slip
        n = slip.num_stance_knots
        nk = self.n_knots
        us = slip.force_scale
        mu = slip.friction_coeff
        n_ineq = 6 * n + n + 4 * n + 2 * nk + 4
        jac = np.zeros((n_ineq, self.n_vars))
        row = 0
        for i in range(n):
            jac[row + 3 * i : row + 3 * i + 3, self._iu + 3 * i : self._iu + 3 * i + 3] = (
                -us * np.eye(3)
            )
        row += 3 * n
        for i in range(n):
            jac[row + 3 * i : row + 3 * i + 3, self._iu + 3 * i : self._iu + 3 * i + 3] = (
                us * np.eye(3)
            )
        row += 3 * n
        dfs = self._spring_jacobians(pos[:-1])
        for i in range(n):
            jac[row + i, self._iu + 3 * i + 2] = us
            jac[row + i, 3 * i : 3 * i + 3] = dfs[i][2]
        row += n
        # friction pyramid, one block of n rows per face
        for axis, sign in ((0, -1.0), (0, 1.0), (1, -1.0), (1, 1.0)):
            for i in range(n):
                iu_i = self._iu + 3 * i
                jac[row + i, iu_i + 2] = mu * us
                jac[row + i, iu_i + axis] += sign * us
                jac[row + i, 3 * i : 3 * i + 3] = mu * dfs[i][2] + sign * dfs[i][axis]
            row += n
        r = pos - self.foot
        for i in range(nk):
            jac[row + i, 3 * i : 3 * i + 3] = -2.0 * r[i]
        row += nk
        for i in range(nk):
            jac[row + i, 3 * i + 2] = 1.0
        row += nk
        jac[row, -2] = 1.0
        jac[row + 1, -2] = -1.0
        jac[row + 2, -1] = 1.0
        jac[row + 3, -1] = -1.0
        return jac

    def hessian(self, x):
        """Exact objective Hessian (scaled coordinates); dense (n, n)."""
        _, _, u, t_s, _ = self.unpack(x)
        slip = self.slip
        n = slip.num_stance_knots
        us2 = slip.force_scale**2
        h = t_s / n
        hess = np.zeros((self.n_vars, self.n_vars))
        iu = self._iu
        nu = 3 * n
        diag = np.full(nu, 2.0 * slip.force_weight * h * us2)
        hess[iu : iu + nu, iu : iu + nu] = np.diag(diag)
        w2 = 2.0 * slip.smoothness_weight * us2
        for i in range(n - 1):
            for c in range(3):
                a, b = iu + 3 * i + c, iu + 3 * (i + 1) + c
                hess[a, a] += w2
                hess[b, b] += w2
                hess[a, b] -= w2
                hess[b, a] -= w2
        cross = 2.0 * slip.force_weight * us2 * (u / slip.force_scale).ravel() / n
        hess[iu : iu + nu, -2] = cross
        hess[-2, iu : iu + nu] = cross
        return hess

    def as_problem(self):
        return NlpProblem(
            n_vars=self.n_vars,
            objective=self.objective,
            gradient=self.gradient,
            eq_constraints=self.eq_constraints,
            eq_jacobian=self.eq_jacobian,
            ineq_constraints=self.ineq_constraints,
            ineq_jacobian=self.ineq_jacobian,
            hessian=self.hessian,
        )

    def max_defect(self, x):
        """Largest trapezoidal dynamics residual, in natural units."""
        pos, vel, u, t_s, _ = self.unpack(x)
        n = self.slip.num_stance_knots
        h = t_s / n
        acc_lo = self._accel(pos[:-1], u)
        acc_hi = self._accel(pos[1:], u)
        d_pos = pos[1:] - pos[:-1] - 0.5 * h * (vel[:-1] + vel[1:])
        d_vel = vel[1:] - vel[:-1] - 0.5 * h * (acc_lo + acc_hi)
        return float(max(np.abs(d_pos).max(), np.abs(d_vel).max()))


def default_slip_params(springs=True):
    """Jump-model parameters for the canonical demonstration.

    The spring variant models the parallel elasticity as a virtual-leg
    linear spring (stiffness and natural length mapped from the joint
    springs at the mid-stroke pose).
    """
    if springs:
        return SlipParams(parallel_stiffness=500.0, leg_natural_length=0.35)
    return SlipParams()


def build_slip_nlp(task, slip=None):
    """Assemble the jump NLP for a task. Returns a SlipNlp."""
    return SlipNlp(task, slip or SlipParams())


def solve_nlp(nlp, x0=None, warm_start=None, options=None):
    """Solve a SlipNlp; returns an NlpSolution.

    `converged` is true only when the solver reports success and the
    dynamics defects and constraint violation are below 1e-6.
    """
    opts = options or SolverOptions(constraint_tol=1e-9, grad_tol=1e-7)
    x_init = nlp.initial_guess() if x0 is None else np.asarray(x0, dtype=float)
    res = solve_augmented_lagrangian(nlp.as_problem(), x_init, opts, warm_start=warm_start)
    pos, vel, u, t_s, t_f = nlp.unpack(res.x)
    defect = nlp.max_defect(res.x)
    converged = bool(res.converged and defect < 1e-6 and res.constraint_violation < 1e-6)
    return NlpSolution(
        stance_positions=pos.copy(),
        stance_velocities=vel.copy(),
        stance_inputs=u.copy(),
        stance_duration=float(t_s),
        flight_duration=float(t_f),
        objective_value=res.objective,
        converged=converged,
        max_defect=defect,
        constraint_violation=res.constraint_violation,
        outer_iterations=res.outer_iterations,
        multipliers=(res.eq_multipliers, res.ineq_multipliers, res.penalty),
        task=nlp.task,
        slip=nlp.slip,
    )


def solve_jump_task(task, slip=None, options=None):
    """Build and solve in one call."""
    nlp = build_slip_nlp(task, slip)
    return solve_nlp(nlp, options=options)
