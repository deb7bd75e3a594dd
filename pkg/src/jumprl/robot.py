"""Robot kinematic model, parallel-spring torques, and joint/Cartesian maps.

Conventions (shared by the whole package):
  * legs are ordered FL, FR, RL, RR; each leg has (abduction, thigh, calf)
    joints, so flat joint vectors have 12 entries in leg-major order.
  * abduction rotates about the base +x axis, thigh and calf about +y.
  * the zero joint pose is the fully extended leg pointing straight down;
    the knee-bent-backward branch has calf angle <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_LEGS = 4
JOINTS_PER_LEG = 3
N_JOINTS = N_LEGS * JOINTS_PER_LEG

# indices of the sagittal joints (thigh, calf) inside one leg
THIGH = 1
CALF = 2


class OutOfWorkspaceError(ValueError):
    """Raised when an IK target lies outside the reachable leg annulus."""

    def __init__(self, msg, nearest_distance=0.0):
        super().__init__(msg)
        self.nearest_distance = float(nearest_distance)


def _default_hip_offsets():
    x, y = 0.1881, 0.1300
    return np.array(
        [[x, y, 0.0], [x, -y, 0.0], [-x, y, 0.0], [-x, -y, 0.0]]
    )


def _default_joint_limits():
    per_leg = np.array([[-0.9, 0.9], [-1.0, 3.5], [-2.8, 0.0]])
    return np.tile(per_leg, (N_LEGS, 1))


@dataclass
class RobotModel:
    """Reduced-order quadruped: rigid base, four massless 2-link legs.

    Geometry and masses default to values approximating a Unitree Go1;
    everything is configuration, nothing is hard-coded downstream.
    """

    base_mass: float = 12.0
    base_inertia: np.ndarray = field(
        default_factory=lambda: np.array([0.10, 0.25, 0.30])
    )
    hip_offsets: np.ndarray = field(default_factory=_default_hip_offsets)
    thigh_len: float = 0.213
    calf_len: float = 0.213
    joint_limits: np.ndarray = field(default_factory=_default_joint_limits)
    joint_reflected_inertia: float = 0.03
    torque_limit: float = 23.7

    def __post_init__(self):
        self.base_inertia = np.asarray(self.base_inertia, dtype=float)
        self.hip_offsets = np.asarray(self.hip_offsets, dtype=float)
        self.joint_limits = np.asarray(self.joint_limits, dtype=float)
        if self.base_mass <= 0.0:
            raise ValueError("base_mass must be positive")
        if np.any(self.base_inertia <= 0.0):
            raise ValueError("base_inertia entries must be positive")
        if self.thigh_len <= 0.0 or self.calf_len <= 0.0:
            raise ValueError("link lengths must be positive")
        if self.joint_limits.shape != (N_JOINTS, 2):
            raise ValueError("joint_limits must be (12, 2)")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("joint_limits must satisfy min < max")
        if self.joint_reflected_inertia <= 0.0:
            raise ValueError("joint_reflected_inertia must be positive")

    @property
    def max_leg_reach(self):
        return self.thigh_len + self.calf_len

    @property
    def min_leg_reach(self):
        return abs(self.thigh_len - self.calf_len)

    def clamp_joints(self, q):
        return np.clip(q, self.joint_limits[:, 0], self.joint_limits[:, 1])


@dataclass
class SpringParams:
    """Parallel springs on the sagittal (thigh, calf) joints.

    Torque law per sprung joint: tau = -K (q - rest) - D dq. Abduction
    joints are never sprung. `enabled=False` is the rigid robot.
    """

    stiffness_thigh: float = 16.0
    stiffness_calf: float = 10.0
    damping: float = 0.05
    # rest angles at the mid-stroke pose: squatting loads the springs,
    # extension releases them
    rest_angle_thigh: float = 0.606
    rest_angle_calf: float = -1.213
    enabled: bool = True

    def __post_init__(self):
        if self.stiffness_thigh < 0.0 or self.stiffness_calf < 0.0:
            raise ValueError("spring stiffness must be >= 0")
        if self.damping < 0.0:
            raise ValueError("spring damping must be >= 0")

    def stiffness_vector(self):
        """Per-joint stiffness, 12-vector (abduction entries zero)."""
        k = np.zeros(N_JOINTS)
        k[THIGH::JOINTS_PER_LEG] = self.stiffness_thigh
        k[CALF::JOINTS_PER_LEG] = self.stiffness_calf
        return k

    def rest_vector(self):
        r = np.zeros(N_JOINTS)
        r[THIGH::JOINTS_PER_LEG] = self.rest_angle_thigh
        r[CALF::JOINTS_PER_LEG] = self.rest_angle_calf
        return r

    def damping_vector(self):
        d = np.zeros(N_JOINTS)
        d[THIGH::JOINTS_PER_LEG] = self.damping
        d[CALF::JOINTS_PER_LEG] = self.damping
        return d


@dataclass
class LegState:
    """Joint angles and rates of a single leg."""

    q: np.ndarray
    dq: np.ndarray


def forward_kinematics(model, leg_index, q):
    """Foot position (base frame) for one leg.

    Args:
        model: RobotModel.
        leg_index: 0..3 (FL, FR, RL, RR).
        q: (3,) joint angles (abduction, thigh, calf) in rad.

    Returns:
        (3,) foot position in the base frame.
    """
    alpha, th, ca = float(q[0]), float(q[1]), float(q[2])
    l1, l2 = model.thigh_len, model.calf_len
    vx = -l1 * np.sin(th) - l2 * np.sin(th + ca)
    vz = -l1 * np.cos(th) - l2 * np.cos(th + ca)
    sa, cab = np.sin(alpha), np.cos(alpha)
    hip = model.hip_offsets[leg_index]
    return hip + np.array([vx, -sa * vz, cab * vz])


def inverse_kinematics(model, leg_index, foot_pos):
    """Joint angles placing the foot at `foot_pos` (base frame).

    Selects the knee-bent-backward branch (calf angle <= 0). Raises
    OutOfWorkspaceError when the target is outside the leg annulus,
    reporting how far the nearest reachable point is.
    """
    r = np.asarray(foot_pos, dtype=float) - model.hip_offsets[leg_index]
    l1, l2 = model.thigh_len, model.calf_len
    rho = np.hypot(r[1], r[2])
    d = np.hypot(r[0], rho)
    lo, hi = model.min_leg_reach, model.max_leg_reach
    if d > hi or d < lo:
        nearest = d - hi if d > hi else lo - d
        raise OutOfWorkspaceError(
            f"foot target at distance {d:.4f} m outside reachable "
            f"annulus [{lo:.4f}, {hi:.4f}] m (short by {nearest:.4f} m)",
            nearest_distance=nearest,
        )
    alpha = np.arctan2(r[1], -r[2])
    cos_ca = (d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    ca = -np.arccos(np.clip(cos_ca, -1.0, 1.0))
    th = np.arctan2(-r[0], rho) - np.arctan2(l2 * np.sin(ca), l1 + l2 * np.cos(ca))
    return np.array([alpha, th, ca])


def leg_jacobian(model, leg_index, q):
    """3x3 Jacobian d(foot position)/d(q) for one leg, base frame."""
    alpha, th, ca = float(q[0]), float(q[1]), float(q[2])
    l1, l2 = model.thigh_len, model.calf_len
    s_t, c_t = np.sin(th), np.cos(th)
    s_tc, c_tc = np.sin(th + ca), np.cos(th + ca)
    vx = -l1 * s_t - l2 * s_tc
    vz = -l1 * c_t - l2 * c_tc
    dvx_dt = -l1 * c_t - l2 * c_tc
    dvz_dt = l1 * s_t + l2 * s_tc
    dvx_dc = -l2 * c_tc
    dvz_dc = l2 * s_tc
    sa, cab = np.sin(alpha), np.cos(alpha)
    jac = np.empty((3, 3))
    # column 0: rotation of the leg plane about +x
    jac[:, 0] = (0.0, -cab * vz, -sa * vz)
    jac[:, 1] = (dvx_dt, -sa * dvz_dt, cab * dvz_dt)
    jac[:, 2] = (dvx_dc, -sa * dvz_dc, cab * dvz_dc)
    return jac


def fk_all_legs(model, q12):
    """Foot positions for all four legs at once.

    Args:
        q12: (12,) flat joint vector, leg-major.

    Returns:
        (4, 3) foot positions in the base frame.
    """
    q = np.asarray(q12, dtype=float).reshape(N_LEGS, JOINTS_PER_LEG)
    l1, l2 = model.thigh_len, model.calf_len
    th, ca = q[:, 1], q[:, 2]
    vx = -l1 * np.sin(th) - l2 * np.sin(th + ca)
    vz = -l1 * np.cos(th) - l2 * np.cos(th + ca)
    sa, cab = np.sin(q[:, 0]), np.cos(q[:, 0])
    out = np.empty((N_LEGS, 3))
    out[:, 0] = vx
    out[:, 1] = -sa * vz
    out[:, 2] = cab * vz
    return out + model.hip_offsets


def knee_all_legs(model, q12):
    """Knee positions for all four legs (collision proxies live here)."""
    q = np.asarray(q12, dtype=float).reshape(N_LEGS, JOINTS_PER_LEG)
    l1 = model.thigh_len
    th = q[:, 1]
    vx = -l1 * np.sin(th)
    vz = -l1 * np.cos(th)
    sa, cab = np.sin(q[:, 0]), np.cos(q[:, 0])
    out = np.empty((N_LEGS, 3))
    out[:, 0] = vx
    out[:, 1] = -sa * vz
    out[:, 2] = cab * vz
    return out + model.hip_offsets


def jacobian_all_legs(model, q12):
    """Stacked (4, 3, 3) leg Jacobians, base frame."""
    q = np.asarray(q12, dtype=float).reshape(N_LEGS, JOINTS_PER_LEG)
    l1, l2 = model.thigh_len, model.calf_len
    th, ca = q[:, 1], q[:, 2]
    s_t, c_t = np.sin(th), np.cos(th)
    s_tc, c_tc = np.sin(th + ca), np.cos(th + ca)
    vz = -l1 * c_t - l2 * c_tc
    dvx_dt = -l1 * c_t - l2 * c_tc
    dvz_dt = l1 * s_t + l2 * s_tc
    dvx_dc = -l2 * c_tc
    dvz_dc = l2 * s_tc
    sa, cab = np.sin(q[:, 0]), np.cos(q[:, 0])
    jac = np.zeros((N_LEGS, 3, 3))
    jac[:, 1, 0] = -cab * vz
    jac[:, 2, 0] = -sa * vz
    jac[:, 0, 1] = dvx_dt
    jac[:, 1, 1] = -sa * dvz_dt
    jac[:, 2, 1] = cab * dvz_dt
    jac[:, 0, 2] = dvx_dc
    jac[:, 1, 2] = -sa * dvz_dc
    jac[:, 2, 2] = cab * dvz_dc
    return jac


def ik_all_legs(model, foot_positions):
    """IK for all four legs; foot_positions is (4, 3) in the base frame."""
    q = np.empty(N_JOINTS)
    for leg in range(N_LEGS):
        q[3 * leg : 3 * leg + 3] = inverse_kinematics(
            model, leg, foot_positions[leg]
        )
    return q


def spring_torque(params, joint_index, q, dq):
    """Parallel-spring torque at one joint; zero when disabled or unsprung."""
    if not params.enabled:
        return 0.0
    j = joint_index % JOINTS_PER_LEG
    if j == THIGH:
        k, rest = params.stiffness_thigh, params.rest_angle_thigh
    elif j == CALF:
        k, rest = params.stiffness_calf, params.rest_angle_calf
    else:
        return 0.0
    return -k * (q - rest) - params.damping * dq


def spring_torque_all(params, q12, dq12):
    """Spring torques for the full 12-joint vector."""
    if not params.enabled:
        return np.zeros(N_JOINTS)
    k = params.stiffness_vector()
    return -k * (q12 - params.rest_vector()) - params.damping_vector() * dq12


def spring_energy(params, q12):
    """Elastic potential energy stored in the parallel springs, in J."""
    if not params.enabled:
        return 0.0
    k = params.stiffness_vector()
    dev = np.asarray(q12, dtype=float) - params.rest_vector()
    return float(0.5 * np.sum(k * dev * dev))
