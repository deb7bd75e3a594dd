"""Reward terms for the jumping MDP.

Per-step tracking terms (joint pose, base position, orientation, horizontal
velocity) use exponential kernels of the Euclidean error and are divided by
the episode horizon so episodes started mid-demonstration are comparable.
Terminal terms (landing accuracy, survival) are granted once. Penalties
(motion smoothness after takeoff, horizontal velocity after landing)
accumulate per step; the episode-level functions recompute them from a log
and must match the per-step accumulation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RewardConfig:
    joint_weight: float = 0.5
    joint_scale: float = 2.0
    base_pos_weight: float = 0.3
    base_pos_scale: float = 10.0
    orientation_weight: float = 0.2
    orientation_scale: float = 5.0
    landing_weight: float = 2.0
    landing_scale: float = 5.0
    accel_penalty_weight: float = 1e-5
    joint_vel_penalty_weight: float = 1e-3
    post_landing_vel_weight: float = 0.05
    velocity_weight: float = 0.0  # stage >= generalization enables this
    velocity_scale: float = 2.0
    survival_magnitude: float = 0.1

    def __post_init__(self):
        for name in (
            "joint_weight",
            "base_pos_weight",
            "orientation_weight",
            "landing_weight",
            "accel_penalty_weight",
            "joint_vel_penalty_weight",
            "post_landing_vel_weight",
            "velocity_weight",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        for name in (
            "joint_scale",
            "base_pos_scale",
            "orientation_scale",
            "landing_scale",
            "velocity_scale",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")


def exp_kernel(scale, reference, actual):
    """exp(-scale * ||reference - actual||_2); 1 at zero error."""
    diff = np.asarray(reference, dtype=float) - np.asarray(actual, dtype=float)
    return float(np.exp(-scale * np.linalg.norm(diff)))


def quat_geodesic_angle(qa, qb):
    """Geodesic angle between two unit quaternions, in [0, pi]."""
    dot = abs(float(np.dot(qa, qb)))
    return 2.0 * np.arccos(min(dot, 1.0))


def imitation_step_reward(cfg, ref, i, q, base_pos, base_quat, horizon):
    """Per-step imitation reward (Eq.-style kernels), normalized by horizon.

    Returns (value, parts) where parts holds the three unnormalized kernels.
    """
    idx = min(i, len(ref) - 1)
    k_q = exp_kernel(cfg.joint_scale, ref.q_ref[idx], q)
    k_p = exp_kernel(cfg.base_pos_scale, ref.com_pos[idx], base_pos)
    angle = quat_geodesic_angle(ref.orientation[idx], base_quat)
    k_o = float(np.exp(-cfg.orientation_scale * angle))
    value = (
        cfg.joint_weight * k_q
        + cfg.base_pos_weight * k_p
        + cfg.orientation_weight * k_o
    ) / horizon
    return value, (k_q, k_p, k_o)


def velocity_step_reward(cfg, target_velocity, base_vel_xy, horizon):
    """Horizontal velocity-matching reward, normalized by horizon."""
    if cfg.velocity_weight == 0.0:
        return 0.0
    k = exp_kernel(cfg.velocity_scale, target_velocity, base_vel_xy)
    return cfg.velocity_weight * k / horizon


def landing_reward(cfg, target, landed_position, terminated_early):
    """Terminal landing-accuracy reward; zero unless the episode survived
    to the final step and an actual landing was detected."""
    if terminated_early or landed_position is None:
        return 0.0
    return cfg.landing_weight * exp_kernel(cfg.landing_scale, target, landed_position)


def survival_reward(cfg, terminated_early):
    """+magnitude on reaching the final step, -magnitude on early stop."""
    return -cfg.survival_magnitude if terminated_early else cfg.survival_magnitude


def smoothness_step_penalty(cfg, dq, dq_prev, dt):
    """Post-takeoff smoothness penalty for one step (L1 on rate and accel)."""
    qdd = (dq - dq_prev) / dt
    return cfg.accel_penalty_weight * float(
        np.abs(qdd).sum()
    ) + cfg.joint_vel_penalty_weight * float(np.abs(dq).sum())


def post_landing_step_penalty(cfg, base_vel_xy):
    """Post-landing stability penalty for one step (L1 on v_xy)."""
    return cfg.post_landing_vel_weight * float(np.abs(base_vel_xy).sum())


def smooth_penalty(cfg, log):
    """Episode smoothness penalty: sums steps from takeoff to the end.

    Log row j holds the state after absolute step log.start_index + 1 + j;
    the phase marks i_air / i_land are absolute step indices.
    """
    if log.i_air is None:
        return 0.0
    total = 0.0
    first = log.start_index + 1
    for j in range(len(log.joint_vel)):
        if first + j < log.i_air:
            continue
        prev = log.joint_vel[j - 1] if j > 0 else log.initial_joint_vel
        total += smoothness_step_penalty(cfg, log.joint_vel[j], prev, log.dt)
    return total


def landing_penalty(cfg, log):
    """Episode post-landing penalty: sums steps from touchdown to the end."""
    if log.i_land is None:
        return 0.0
    total = 0.0
    first = log.start_index + 1
    for j in range(len(log.base_vel)):
        if first + j >= log.i_land:
            total += post_landing_step_penalty(cfg, log.base_vel[j][:2])
    return total


def episode_reward(cfg, log):
    """Assemble the full episode return and its per-term breakdown.

    Pure function of the episode log; equals the sum of the per-step
    rewards the environment handed out, to floating-point accuracy.
    """
    horizon = log.horizon
    imitation = 0.0
    velocity = 0.0
    for j in range(len(log.joint_pos)):
        step = log.start_index + 1 + j
        value, _ = imitation_step_reward(
            cfg,
            log.reference,
            step,
            log.joint_pos[j],
            log.base_pos[j],
            log.base_quat[j],
            horizon,
        )
        imitation += value
        velocity += velocity_step_reward(
            cfg, log.target_velocity_at(j), log.base_vel[j][:2], horizon
        )
    p_smooth = smooth_penalty(cfg, log)
    p_land = landing_penalty(cfg, log)
    early = log.terminated_early
    r_land = landing_reward(cfg, log.target, log.landed_position, early)
    r_surv = survival_reward(cfg, early)
    total = imitation + velocity + r_land - p_smooth - p_land + r_surv
    breakdown = {
        "imitation": imitation,
        "velocity": velocity,
        "landing": r_land,
        "smooth_penalty": p_smooth,
        "post_landing_penalty": p_land,
        "survival": r_surv,
    }
    return total, breakdown
