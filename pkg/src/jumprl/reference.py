"""Demonstration trajectory: interpolation, IK references, file format.

Turns a converged SLIP solution into the single time-indexed demonstration
consumed by the environment and the learner: CoM pose/velocity samples at the
policy period, per-sample joint references from inverse kinematics, contact
flags by phase, and a fixed-pose landing tail.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import robot as rb

FORMAT_NAME = "jumprl-reference"
FORMAT_VERSION = 1


@dataclass
class ReferenceTrajectory:
    """Time-indexed jump demonstration at the policy period.

    Index i corresponds to time i*dt. `i_air` is the last sample in ground
    contact before flight, `i_land` the first sample at or after touchdown.
    Orientation is identity throughout (the demonstration is planar).
    """

    dt: float
    com_pos: np.ndarray  # (M, 3)
    com_vel: np.ndarray  # (M, 3)
    q_ref: np.ndarray  # (M, 12)
    contact_ref: np.ndarray  # (M, 4) bool
    i_air: int
    i_land: int
    landing_pose: np.ndarray  # (12,)
    target_displacement: np.ndarray  # (2,), flight displacement of the demo
    jump_duration: float  # stance + flight, seconds
    orientation: np.ndarray = field(default=None)  # (M, 4) wxyz, identity

    def __post_init__(self):
        m = len(self.com_pos)
        if self.orientation is None:
            self.orientation = np.tile([1.0, 0.0, 0.0, 0.0], (m, 1))

    def __len__(self):
        return len(self.com_pos)

    @property
    def num_steps(self):
        """Episode horizon N implied by the demonstration (actions 0..N-1)."""
        return len(self.com_pos) - 1

    def joint_velocity_ref(self, i):
        """Reference joint rate at sample i by forward difference."""
        j = min(i + 1, len(self) - 1)
        if j == i:
            return np.zeros(rb.N_JOINTS)
        return (self.q_ref[j] - self.q_ref[i]) / self.dt

    def max_joint_rate(self):
        """Largest |dq_ref/dt| across the trajectory (continuity check)."""
        steps = np.abs(np.diff(self.q_ref, axis=0)).max() if len(self) > 1 else 0.0
        return float(steps / self.dt)

    def residual_scale(self, floor=0.2, cap=0.4):
        """Per-joint residual-action scale from the reference spread.

        scale_j = max_i |q_ref[i, j] - mean_i q_ref[., j]|, floored so joints
        with a constant reference (abduction in the planar demo) keep
        authority for lateral tasks, and capped so high-spread joints do not
        hand the policy enough authority to fold the legs into the ground.
        """
        spread = np.abs(self.q_ref - self.q_ref.mean(axis=0)).max(axis=0)
        return np.clip(spread, floor, cap)


def interpolate_reference(sol, dt, model, foot_ground_height=0.0):
    """Sample a converged SLIP solution at the policy period.

    CoM samples are linear between stance knots and analytic along the
    ballistic arc; joint references come from per-leg IK with the feet
    pinned at their initial ground spots during stance and a cosine blend
    to the landing pose during flight.

    Raises:
        ValueError: solution not converged, or IK unreachable at a sample
            (the failing sample index is reported).
    """
    if not sol.converged:
        raise ValueError("cannot interpolate a non-converged solution")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    slip = sol.slip
    t_s, t_f = sol.stance_duration, sol.flight_duration
    g = slip.gravity
    i_air = int(np.floor(t_s / dt + 1e-12))
    i_land = int(np.ceil((t_s + t_f) / dt - 1e-12))
    m = i_land + 1

    com0 = sol.stance_positions[0]
    land_com = sol.landing_position
    # feet pinned on the ground below the hips of the starting stance
    feet_world = np.empty((rb.N_LEGS, 3))
    feet_world[:, :2] = com0[:2] + model.hip_offsets[:, :2]
    feet_world[:, 2] = foot_ground_height
    landing_feet = np.empty((rb.N_LEGS, 3))
    landing_feet[:, :2] = land_com[:2] + model.hip_offsets[:, :2]
    landing_feet[:, 2] = foot_ground_height
    try:
        landing_pose = rb.ik_all_legs(model, landing_feet - land_com)
    except rb.OutOfWorkspaceError as err:
        raise ValueError(f"landing pose IK failed: {err}") from err

    n = slip.num_stance_knots
    h = t_s / n
    com_pos = np.empty((m, 3))
    com_vel = np.empty((m, 3))
    q_ref = np.empty((m, rb.N_JOINTS))
    contact = np.zeros((m, rb.N_LEGS), dtype=bool)
    # flight blend anchors at the exact takeoff pose so the sampled
    # trajectory is independent of the sampling grid
    try:
        takeoff_pose = rb.ik_all_legs(model, feet_world - sol.takeoff_position)
    except rb.OutOfWorkspaceError as err:
        raise ValueError(f"takeoff pose IK failed: {err}") from err
    for i in range(m):
        t = i * dt
        if t <= t_s + 1e-12:
            s = min(t / h, float(n))
            k = min(int(np.floor(s)), n - 1)
            frac = s - k
            com_pos[i] = (1 - frac) * sol.stance_positions[k] + frac * sol.stance_positions[k + 1]
            com_vel[i] = (1 - frac) * sol.stance_velocities[k] + frac * sol.stance_velocities[k + 1]
            contact[i] = True
            try:
                q_ref[i] = rb.ik_all_legs(model, feet_world - com_pos[i])
            except rb.OutOfWorkspaceError as err:
                raise ValueError(f"stance IK failed at sample {i}: {err}") from err
        elif t < t_s + t_f:
            tau = t - t_s
            com_pos[i] = (
                sol.takeoff_position
                + sol.takeoff_velocity * tau
                + 0.5 * np.array([0.0, 0.0, -g]) * tau * tau
            )
            com_vel[i] = sol.takeoff_velocity + np.array([0.0, 0.0, -g]) * tau
            blend = 0.5 * (1.0 - np.cos(np.pi * tau / t_f))
            q_ref[i] = (1.0 - blend) * takeoff_pose + blend * landing_pose
        else:
            com_pos[i] = land_com
            com_vel[i] = 0.0
            q_ref[i] = landing_pose
            contact[i] = True
    return ReferenceTrajectory(
        dt=float(dt),
        com_pos=com_pos,
        com_vel=com_vel,
        q_ref=q_ref,
        contact_ref=contact,
        i_air=i_air,
        i_land=i_land,
        landing_pose=landing_pose,
        target_displacement=sol.task.target_displacement.copy(),
        jump_duration=float(t_s + t_f),
    )


def extend_landing_phase(ref, landing_hold):
    """Append `landing_hold` seconds of fixed-pose landing samples."""
    if landing_hold < 0.0:
        raise ValueError("landing_hold must be >= 0")
    n_extra = int(round(landing_hold / ref.dt))
    if n_extra == 0:
        return replace(ref)
    com = np.vstack([ref.com_pos, np.tile(ref.com_pos[-1], (n_extra, 1))])
    vel = np.vstack([ref.com_vel, np.zeros((n_extra, 3))])
    q = np.vstack([ref.q_ref, np.tile(ref.landing_pose, (n_extra, 1))])
    contact = np.vstack(
        [ref.contact_ref, np.ones((n_extra, rb.N_LEGS), dtype=bool)]
    )
    quat = np.vstack([ref.orientation, np.tile([1.0, 0, 0, 0], (n_extra, 1))])
    return replace(
        ref,
        com_pos=com,
        com_vel=vel,
        q_ref=q,
        contact_ref=contact,
        orientation=quat,
    )


def generate_reference(task, slip, model, dt=0.02, landing_hold=0.5, foot_ground_height=0.0):
    """Solve the jump NLP and produce the full demonstration."""
    from .slip import solve_jump_task

    sol = solve_jump_task(task, slip)
    if not sol.converged:
        raise ValueError(
            f"trajectory optimization did not converge "
            f"(defect {sol.max_defect:.2e}, violation {sol.constraint_violation:.2e})"
        )
    ref = interpolate_reference(sol, dt, model, foot_ground_height)
    return extend_landing_phase(ref, landing_hold)


def save_reference(ref, path):
    """Write the demonstration as a versioned columnar text file."""
    buf = io.StringIO()
    buf.write(f"# {FORMAT_NAME} {FORMAT_VERSION}\n")
    buf.write(f"# dt {float(ref.dt)!r}\n")
    buf.write(f"# i_air {ref.i_air}\n")
    buf.write(f"# i_land {ref.i_land}\n")
    buf.write(f"# jump_duration {float(ref.jump_duration)!r}\n")
    buf.write(
        "# target " + " ".join(repr(float(v)) for v in ref.target_displacement) + "\n"
    )
    buf.write(
        "# landing_pose " + " ".join(repr(float(v)) for v in ref.landing_pose) + "\n"
    )
    buf.write(
        "# columns t com[3] vel[3] quat[4] q_ref[12] contact[4]\n"
    )
    for i in range(len(ref)):
        row = [i * ref.dt]
        row += list(ref.com_pos[i])
        row += list(ref.com_vel[i])
        row += list(ref.orientation[i])
        row += list(ref.q_ref[i])
        row += [float(c) for c in ref.contact_ref[i]]
        buf.write(" ".join(repr(float(v)) for v in row) + "\n")
    with open(path, "w") as f:
        f.write(buf.getvalue())


def load_reference(path):
    """Read a demonstration written by save_reference."""
    meta = {}
    rows = []
    with open(path) as f:
        first = f.readline().split()
        if len(first) < 3 or first[1] != FORMAT_NAME or int(first[2]) != FORMAT_VERSION:
            raise ValueError(f"{path}: not a {FORMAT_NAME} v{FORMAT_VERSION} file")
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] != "columns":
                    meta[parts[0]] = parts[1:]
                continue
            rows.append([float(v) for v in line.split()])
    data = np.asarray(rows)
    if data.shape[1] != 1 + 3 + 3 + 4 + 12 + 4:
        raise ValueError(f"{path}: unexpected column count {data.shape[1]}")
    return ReferenceTrajectory(
        dt=float(meta["dt"][0]),
        com_pos=data[:, 1:4].copy(),
        com_vel=data[:, 4:7].copy(),
        orientation=data[:, 7:11].copy(),
        q_ref=data[:, 11:23].copy(),
        contact_ref=data[:, 23:27] > 0.5,
        i_air=int(meta["i_air"][0]),
        i_land=int(meta["i_land"][0]),
        landing_pose=np.array([float(v) for v in meta["landing_pose"]]),
        target_displacement=np.array([float(v) for v in meta["target"]]),
        jump_duration=float(meta["jump_duration"][0]),
    )
