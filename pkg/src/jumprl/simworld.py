"""Reduced-order quadruped physics: floating base, massless legs, penalty
ground contact, parallel springs, and a 1 kHz PD actuation layer.

The base is a single rigid body; legs carry no mass but each joint has a
reflected inertia so joint dynamics are well posed. Contact forces at the
point feet act on the base through the leg Jacobians, which is the statics-
consistent way leg torques react on a massless-leg mechanism. Integration is
semi-implicit Euler at the PD rate (default 1 kHz) with the policy command
held constant across the substeps of one policy period.

Tangential friction comes in two flavors sharing one entry point:
stateless (viscous below a slip-velocity epsilon, Coulomb-saturated above),
and anchored stick-slip when per-foot anchors are supplied. The stepper uses
anchors: a purely viscous tangential law cannot hold a static stance and
makes a standing robot creep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import robot as rb


class SimulationDivergedError(RuntimeError):
    """Raised when the state stops being finite; names the substep."""


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_to_rot(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_from_rotvec(v):
    angle = np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if angle < 1e-12:
        return np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
    half = 0.5 * angle
    s = np.sin(half) / angle
    return np.array([np.cos(half), s * v[0], s * v[1], s * v[2]])


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class ContactConfig:
    """Penalty (spring-damper) point contact with Coulomb friction."""

    normal_stiffness: float = 1e4
    normal_damping: float = 200.0
    friction_coeff: float = 0.7
    tangential_stiffness: float = 1e4  # anchored stick spring, N/m
    tangential_damping: float = 100.0
    tangential_regularization: float = 0.02  # m/s, stateless viscous regime
    contact_force_threshold: float = 1.0  # N, flag a foot as "in contact"

    def __post_init__(self):
        if self.normal_stiffness <= 0.0:
            raise ValueError("normal_stiffness must be positive")
        if self.friction_coeff < 0.0:
            raise ValueError("friction_coeff must be >= 0")


@dataclass
class ActuatorConfig:
    """Joint PD layer running at the inner rate."""

    kp: float = 60.0
    kd: float = 1.5
    torque_limit: float = 23.7
    motor_strength_scale: float = 1.0
    coulomb_friction_torque: float = 0.0
    inner_dt: float = 0.001
    steps_per_action: int = 20

    def __post_init__(self):
        if self.inner_dt <= 0.0 or self.steps_per_action < 1:
            raise ValueError("bad inner loop configuration")

    @property
    def policy_dt(self):
        return self.inner_dt * self.steps_per_action


@dataclass
class SimState:
    base_pos: np.ndarray
    base_quat: np.ndarray
    base_vel: np.ndarray
    base_angvel: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    foot_contact: np.ndarray
    time: float = 0.0
    foot_anchor: np.ndarray = None  # (4, 2) stick anchors, NaN when airborne

    def __post_init__(self):
        if self.foot_anchor is None:
            self.foot_anchor = np.full((rb.N_LEGS, 2), np.nan)

    def copy(self):
        return SimState(
            base_pos=self.base_pos.copy(),
            base_quat=self.base_quat.copy(),
            base_vel=self.base_vel.copy(),
            base_angvel=self.base_angvel.copy(),
            q=self.q.copy(),
            dq=self.dq.copy(),
            foot_contact=self.foot_contact.copy(),
            time=self.time,
            foot_anchor=self.foot_anchor.copy(),
        )


@dataclass
class StepInfo:
    """Per-policy-step actuation summary accumulated at the inner rate."""

    motor_energy: float = 0.0  # sum |tau . dq| * inner_dt over substeps, J
    peak_power: float = 0.0  # max over substeps of sum_j |tau_j dq_j|, W
    peak_torque: float = 0.0  # max over substeps and joints of |tau_j|
    inner_power: np.ndarray = None  # (steps_per_action,) when tracing
    inner_torque: np.ndarray = None  # (steps_per_action, 12) when tracing
    inner_joint_vel: np.ndarray = None  # (steps_per_action, 12) when tracing


def pd_torque(cfg, q_des, q, dq):
    """Motor torques: scaled, clamped PD, then Coulomb friction opposing dq."""
    tau = cfg.motor_strength_scale * (cfg.kp * (q_des - q) - cfg.kd * dq)
    tau = np.clip(tau, -cfg.torque_limit, cfg.torque_limit)
    if cfg.coulomb_friction_torque != 0.0:
        tau = tau - cfg.coulomb_friction_torque * np.sign(dq)
    return tau


def contact_forces(terrain, cfg, foot_pos, foot_vel, anchors=None):
    """World-frame penalty forces for point feet.

    Args:
        foot_pos: (k, 3) world foot positions.
        foot_vel: (k, 3) world foot velocities.
        anchors: optional (k, 2) stick anchors, updated in place. Without
            anchors the tangential law is viscous below the slip-velocity
            epsilon and Coulomb-saturated above; with anchors it is an
            anchored spring-damper capped by the friction cone (static
            friction), and anchors of separating feet are reset to NaN.

    Returns:
        (k, 3) forces; zero rows for feet above ground.
    """
    pen = terrain.height_at(foot_pos[:, 0], foot_pos[:, 1]) - foot_pos[:, 2]
    forces = np.zeros_like(foot_pos)
    touching = pen > 0.0
    if anchors is not None:
        anchors[~touching] = np.nan
    if not np.any(touching):
        return forces
    f_n = np.maximum(
        0.0,
        cfg.normal_stiffness * pen[touching]
        - cfg.normal_damping * foot_vel[touching, 2],
    )
    cap = cfg.friction_coeff * f_n
    v_t = foot_vel[touching, :2]
    if anchors is None:
        speed = np.sqrt(v_t[:, 0] ** 2 + v_t[:, 1] ** 2)
        scale = cap / np.maximum(speed, cfg.tangential_regularization)
        f_t = -scale[:, None] * v_t
    else:
        p_t = foot_pos[touching, :2]
        a = anchors[touching]
        fresh = np.isnan(a[:, 0])
        if fresh.any():
            a[fresh] = p_t[fresh]
        f_t = -cfg.tangential_stiffness * (p_t - a) - cfg.tangential_damping * v_t
        mag = np.sqrt(f_t[:, 0] ** 2 + f_t[:, 1] ** 2)
        sliding = mag > cap
        if sliding.any():
            f_t[sliding] *= (cap[sliding] / mag[sliding])[:, None]
            # reposition anchors so the spring realizes the capped force
            a[sliding] = p_t[sliding] + (
                f_t[sliding] + cfg.tangential_damping * v_t[sliding]
            ) / cfg.tangential_stiffness
        anchors[touching] = a
    forces[touching, 2] = f_n
    forces[touching, :2] = f_t
    return forces


def _load_native():
    try:
        from . import simnative

        return simnative
    except ImportError:
        return None


_NATIVE = _load_native()


@dataclass
class SimWorld:
    """Bundles the physical configuration and advances SimState.

    `backend="native"` runs the compiled substep loop (numba), "numpy" the
    reference implementation, "auto" prefers native when importable. Both
    paths implement identical physics; tests compare them.
    """

    model: rb.RobotModel
    springs: rb.SpringParams
    terrain: object
    actuator: ActuatorConfig = field(default_factory=ActuatorConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)
    gravity: float = 9.81
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    extra_mass: float = 0.0
    backend: str = "auto"

    def __post_init__(self):
        self.com_offset = np.asarray(self.com_offset, dtype=float)
        if self.backend == "auto":
            self.backend = "native" if _NATIVE is not None else "numpy"
        if self.backend == "native" and _NATIVE is None:
            raise RuntimeError("native simulation backend unavailable")
        # configuration is immutable after construction; cache derived arrays
        self._q_lo = self.model.joint_limits[:, 0].copy()
        self._q_hi = self.model.joint_limits[:, 1].copy()
        self._k_spring = self.springs.stiffness_vector()
        self._rest = self.springs.rest_vector()
        self._d_spring = self.springs.damping_vector()

    @property
    def total_mass(self):
        return self.model.base_mass + self.extra_mass

    def step(self, state, q_des, trace=False):
        """Advance one policy period (steps_per_action inner substeps).

        Args:
            state: SimState (not mutated).
            q_des: (12,) desired joint angles held for the whole period.
            trace: when true, StepInfo carries per-substep torque/velocity
                arrays for the energy/power metrics.

        Returns:
            (SimState, StepInfo).

        Raises:
            SimulationDivergedError: a non-finite value appeared; the
                message names the substep.
        """
        if self.backend == "native":
            return self._step_native(state, q_des, trace)
        act = self.actuator
        model = self.model
        contact = self.contact
        dt = act.inner_dt
        n_sub = act.steps_per_action
        m_total = self.total_mass
        inv_ij = 1.0 / model.joint_reflected_inertia
        inertia = model.base_inertia
        l1, l2 = model.thigh_len, model.calf_len
        hip = model.hip_offsets
        q_lo = self._q_lo
        q_hi = self._q_hi
        kp = act.kp * act.motor_strength_scale
        kd = act.kd * act.motor_strength_scale
        t_lim = act.torque_limit
        coul = act.coulomb_friction_torque
        grav_z = -self.gravity * m_total
        com_off = self.com_offset
        com_off_zero = not com_off.any()

        pos = state.base_pos.copy()
        quat = state.base_quat.copy()
        vel = state.base_vel.copy()
        omega = state.base_angvel.copy()
        q = state.q.copy()
        dq = state.dq.copy()
        anchors = state.foot_anchor.copy()
        contact_flags = state.foot_contact.copy()

        spring_enabled = self.springs.enabled
        if spring_enabled:
            k_spring = self._k_spring
            rest = self._rest
            d_spring = self._d_spring

        info = StepInfo()
        if trace:
            info.inner_power = np.zeros(n_sub)
            info.inner_torque = np.zeros((n_sub, rb.N_JOINTS))
            info.inner_joint_vel = np.zeros((n_sub, rb.N_JOINTS))

        for sub in range(n_sub):
            rot = quat_to_rot(quat)
            ql = q.reshape(rb.N_LEGS, 3)
            dql = dq.reshape(rb.N_LEGS, 3)
            s_a = np.sin(ql[:, 0])
            c_a = np.cos(ql[:, 0])
            s_t = np.sin(ql[:, 1])
            c_t = np.cos(ql[:, 1])
            s_tc = np.sin(ql[:, 1] + ql[:, 2])
            c_tc = np.cos(ql[:, 1] + ql[:, 2])
            vx = -l1 * s_t - l2 * s_tc
            vz = -l1 * c_t - l2 * c_tc
            # foot positions in base frame
            fb = np.empty((rb.N_LEGS, 3))
            fb[:, 0] = hip[:, 0] + vx
            fb[:, 1] = hip[:, 1] - s_a * vz
            fb[:, 2] = hip[:, 2] + c_a * vz
            # leg Jacobian entries (nonzero pattern per leg)
            dvx_dt = -l1 * c_t - l2 * c_tc
            dvz_dt = l1 * s_t + l2 * s_tc
            dvx_dc = -l2 * c_tc
            dvz_dc = l2 * s_tc
            j10 = -c_a * vz
            j20 = -s_a * vz
            j11 = -s_a * dvz_dt
            j21 = c_a * dvz_dt
            j12 = -s_a * dvz_dc
            j22 = c_a * dvz_dc
            # foot velocity in base frame: J @ dq per leg
            fvb = np.empty((rb.N_LEGS, 3))
            fvb[:, 0] = dvx_dt * dql[:, 1] + dvx_dc * dql[:, 2]
            fvb[:, 1] = j10 * dql[:, 0] + j11 * dql[:, 1] + j12 * dql[:, 2]
            fvb[:, 2] = j20 * dql[:, 0] + j21 * dql[:, 1] + j22 * dql[:, 2]

            feet_w = pos + fb @ rot.T
            rel = feet_w - pos
            foot_vel_w = fvb @ rot.T
            foot_vel_w[:, 0] += vel[0] + omega[1] * rel[:, 2] - omega[2] * rel[:, 1]
            foot_vel_w[:, 1] += vel[1] + omega[2] * rel[:, 0] - omega[0] * rel[:, 2]
            foot_vel_w[:, 2] += vel[2] + omega[0] * rel[:, 1] - omega[1] * rel[:, 0]

            forces_w = contact_forces(self.terrain, contact, feet_w, foot_vel_w, anchors)
            any_contact = forces_w[:, 2].any()
            contact_flags = forces_w[:, 2] > contact.contact_force_threshold

            tau_motor = kp * (q_des - q) - kd * dq
            np.clip(tau_motor, -t_lim, t_lim, out=tau_motor)
            if coul != 0.0:
                tau_motor -= coul * np.sign(dq)
            tau = tau_motor.copy()
            if spring_enabled:
                tau += -k_spring * (q - rest) - d_spring * dq
            if any_contact:
                f_b = forces_w @ rot  # rot.T @ f per row
                tau_c = np.empty((rb.N_LEGS, 3))
                tau_c[:, 0] = j10 * f_b[:, 1] + j20 * f_b[:, 2]
                tau_c[:, 1] = dvx_dt * f_b[:, 0] + j11 * f_b[:, 1] + j21 * f_b[:, 2]
                tau_c[:, 2] = dvx_dc * f_b[:, 0] + j12 * f_b[:, 1] + j22 * f_b[:, 2]
                tau += tau_c.ravel()

            qdd = tau * inv_ij
            if any_contact:
                fx, fy, fz = forces_w.sum(axis=0)
                if com_off_zero:
                    arm = rel
                else:
                    arm = feet_w - (pos + rot @ com_off)
                tq = np.array(
                    [
                        np.sum(arm[:, 1] * forces_w[:, 2] - arm[:, 2] * forces_w[:, 1]),
                        np.sum(arm[:, 2] * forces_w[:, 0] - arm[:, 0] * forces_w[:, 2]),
                        np.sum(arm[:, 0] * forces_w[:, 1] - arm[:, 1] * forces_w[:, 0]),
                    ]
                )
                omega_b = rot.T @ omega
                iw_omega = rot @ (inertia * omega_b)
                gyro = np.array(
                    [
                        omega[1] * iw_omega[2] - omega[2] * iw_omega[1],
                        omega[2] * iw_omega[0] - omega[0] * iw_omega[2],
                        omega[0] * iw_omega[1] - omega[1] * iw_omega[0],
                    ]
                )
                omega_dot = rot @ ((rot.T @ (tq - gyro)) / inertia)
                acc = np.array([fx / m_total, fy / m_total, (fz + grav_z) / m_total])
            else:
                omega_b = rot.T @ omega
                iw_omega = rot @ (inertia * omega_b)
                gyro = np.array(
                    [
                        omega[1] * iw_omega[2] - omega[2] * iw_omega[1],
                        omega[2] * iw_omega[0] - omega[0] * iw_omega[2],
                        omega[0] * iw_omega[1] - omega[1] * iw_omega[0],
                    ]
                )
                omega_dot = rot @ ((rot.T @ (-gyro)) / inertia)
                acc = np.array([0.0, 0.0, grav_z / m_total])

            dq += qdd * dt
            q += dq * dt
            oob = (q < q_lo) | (q > q_hi)
            if oob.any():
                np.clip(q, q_lo, q_hi, out=q)
                dq[oob] = 0.0
            vel += acc * dt
            pos += vel * dt
            omega += omega_dot * dt
            quat = quat_mul(quat_from_rotvec(omega * dt), quat)
            quat /= np.sqrt(np.sum(quat * quat))

            power = float(np.sum(np.abs(tau_motor * dq)))
            info.motor_energy += power * dt
            if power > info.peak_power:
                info.peak_power = power
            peak_tau = float(np.abs(tau_motor).max())
            if peak_tau > info.peak_torque:
                info.peak_torque = peak_tau
            if trace:
                info.inner_power[sub] = power
                info.inner_torque[sub] = tau_motor
                info.inner_joint_vel[sub] = dq

            if not (np.isfinite(pos[2]) and np.isfinite(q[0])):
                raise SimulationDivergedError(
                    f"non-finite state at substep {sub} "
                    f"(t={state.time + (sub + 1) * dt:.4f}s)"
                )

        if not (np.isfinite(pos).all() and np.isfinite(q).all() and np.isfinite(vel).all()):
            raise SimulationDivergedError(
                f"non-finite state after {n_sub} substeps (t={state.time + n_sub * dt:.4f}s)"
            )
        new_state = SimState(
            base_pos=pos,
            base_quat=quat,
            base_vel=vel,
            base_angvel=omega,
            q=q,
            dq=dq,
            foot_contact=contact_flags,
            time=state.time + n_sub * dt,
            foot_anchor=anchors,
        )
        return new_state, info

    def _step_native(self, state, q_des, trace):
        act = self.actuator
        model = self.model
        contact = self.contact
        n_sub = act.steps_per_action
        pos = state.base_pos.copy()
        quat = state.base_quat.copy()
        vel = state.base_vel.copy()
        omega = state.base_angvel.copy()
        q = state.q.copy()
        dq = state.dq.copy()
        anchors = state.foot_anchor.copy()
        flags = state.foot_contact.astype(bool).copy()
        terr = self.terrain
        heights = terr.heights if terr.heights.size else np.zeros((0, 0))
        info_arr = np.zeros(3)
        if trace:
            tr_power = np.zeros(n_sub)
            tr_tau = np.zeros((n_sub, rb.N_JOINTS))
            tr_dq = np.zeros((n_sub, rb.N_JOINTS))
        else:
            tr_power = np.zeros(1)
            tr_tau = np.zeros((1, rb.N_JOINTS))
            tr_dq = np.zeros((1, rb.N_JOINTS))
        bad = _NATIVE.substep_loop(
            n_sub,
            act.inner_dt,
            pos,
            quat,
            vel,
            omega,
            q,
            dq,
            anchors,
            flags,
            np.asarray(q_des, dtype=float),
            model.hip_offsets,
            model.thigh_len,
            model.calf_len,
            self._q_lo,
            self._q_hi,
            1.0 / model.joint_reflected_inertia,
            model.base_inertia,
            self.total_mass,
            self.gravity,
            self.com_offset,
            act.kp * act.motor_strength_scale,
            act.kd * act.motor_strength_scale,
            act.torque_limit,
            act.coulomb_friction_torque,
            contact.normal_stiffness,
            contact.normal_damping,
            contact.friction_coeff,
            contact.tangential_stiffness,
            contact.tangential_damping,
            contact.tangential_regularization,
            contact.contact_force_threshold,
            self.springs.enabled,
            self._k_spring,
            self._rest,
            self._d_spring,
            float(terr.origin[0]),
            float(terr.origin[1]),
            float(terr.cell_size),
            heights,
            float(terr.base_height),
            info_arr,
            trace,
            tr_power,
            tr_tau,
            tr_dq,
        )
        if bad:
            raise SimulationDivergedError(
                f"non-finite state at substep {bad - 1} "
                f"(t={state.time + bad * act.inner_dt:.4f}s)"
            )
        info = StepInfo(
            motor_energy=float(info_arr[0]),
            peak_power=float(info_arr[1]),
            peak_torque=float(info_arr[2]),
        )
        if trace:
            info.inner_power = tr_power
            info.inner_torque = tr_tau
            info.inner_joint_vel = tr_dq
        new_state = SimState(
            base_pos=pos,
            base_quat=quat,
            base_vel=vel,
            base_angvel=omega,
            q=q,
            dq=dq,
            foot_contact=flags,
            time=state.time + n_sub * act.inner_dt,
            foot_anchor=anchors,
        )
        return new_state, info

    def collision_proxy_points(self, state, base_half_extents=(0.19, 0.10, 0.06)):
        """World positions of the illegal-contact proxies.

        Proxies are the eight base-box corners and the four calf midpoints;
        the feet themselves are excluded (foot contact is legal).
        """
        rot = quat_to_rot(state.base_quat)
        hx, hy, hz = base_half_extents
        corners = np.array(
            [
                [sx * hx, sy * hy, sz * hz]
                for sx in (-1, 1)
                for sy in (-1, 1)
                for sz in (-1, 1)
            ]
        )
        knees = rb.knee_all_legs(self.model, state.q)
        feet = rb.fk_all_legs(self.model, state.q)
        calf_mid = 0.5 * (knees + feet)
        pts_b = np.vstack([corners, calf_mid])
        return state.base_pos + pts_b @ rot.T

    def has_illegal_contact(self, state):
        pts = self.collision_proxy_points(state)
        ground = self.terrain.height_at(pts[:, 0], pts[:, 1])
        return bool(np.any(pts[:, 2] < ground))


def standing_state(model, terrain, com_height, xy=(0.0, 0.0), contact_cfg=None):
    """Statically consistent stand: feet under hips on the local ground.

    Feet are placed with the static penalty penetration (weight / 4 k_c)
    so the contact model carries the robot from the first substep. The
    base is level; its height is the commanded CoM height above the mean
    ground level under the feet.
    """
    x0, y0 = xy
    foot_xy = model.hip_offsets[:, :2] + np.array([x0, y0])
    ground = np.atleast_1d(terrain.height_at(foot_xy[:, 0], foot_xy[:, 1]))
    k_c = contact_cfg.normal_stiffness if contact_cfg is not None else 1e4
    penetration = model.base_mass * 9.81 / (rb.N_LEGS * k_c)
    base_z = float(np.mean(ground)) + com_height
    feet_world = np.column_stack([foot_xy, ground - penetration])
    base_pos = np.array([x0, y0, base_z])
    q = rb.ik_all_legs(model, feet_world - base_pos)
    return SimState(
        base_pos=base_pos,
        base_quat=np.array([1.0, 0.0, 0.0, 0.0]),
        base_vel=np.zeros(3),
        base_angvel=np.zeros(3),
        q=q,
        dq=np.zeros(rb.N_JOINTS),
        foot_contact=np.ones(rb.N_LEGS, dtype=bool),
        time=0.0,
        foot_anchor=feet_world[:, :2].copy(),
    )


def settle_on_terrain(model, terrain, com_height, xy=(0.0, 0.0), contact_cfg=None):
    """Per-foot IK stand on uneven ground.

    Each foot rests on its local box top; the base stays level at the
    commanded CoM height above the mean ground level. Raises
    OutOfWorkspaceError when a height step under a foot is unreachable,
    in which case the caller resamples the terrain.

    Returns:
        (SimState, q_init).
    """
    state = standing_state(model, terrain, com_height, xy, contact_cfg)
    return state, state.q.copy()
