"""Goal-conditioned jumping MDP wrapping the reduced-order simulator.

Observations carry proprioception plus the remaining-time fraction and the
commanded landing displacement; the policy input stacks the last 20
(observation, action) pairs. Actions are low-pass filtered residuals around
the demonstration's joint references. Termination, reward shaping, reference
state initialization, task/terrain sampling, and domain randomization all
follow the active curriculum stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rewards as rw
from . import robot as rb
from . import simworld as sw
from .stages import (
    apply_domain_randomization,
    sample_domain_randomization,
    sample_task,
)
from .terrain import flat_terrain, make_uneven_terrain

OBS_DIM = 37  # q(12) dq(12) vel(3) angvel(3) quat(4) time(1) target(2)
HISTORY_LEN = 20

TERMINATION_CAUSES = (
    "completed",
    "illegal_contact",
    "fell",
    "contact_mismatch",
    "landing_error",
    "diverged",
)


@dataclass
class EpisodeLog:
    """Per-step record of one episode; input to rewards and metrics."""

    reference: object
    target: np.ndarray
    dt: float
    start_index: int
    horizon: int
    base_pos: list = field(default_factory=list)
    base_quat: list = field(default_factory=list)
    base_vel: list = field(default_factory=list)
    joint_pos: list = field(default_factory=list)
    joint_vel: list = field(default_factory=list)
    raw_action: list = field(default_factory=list)
    filtered_action: list = field(default_factory=list)
    q_des: list = field(default_factory=list)
    contact: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    reward_parts: list = field(default_factory=list)
    motor_energy: list = field(default_factory=list)
    peak_power: list = field(default_factory=list)
    peak_torque: list = field(default_factory=list)
    inner_power: list = field(default_factory=list)
    inner_torque: list = field(default_factory=list)
    inner_joint_vel: list = field(default_factory=list)
    i_air: int = None
    i_land: int = None
    landed_position: np.ndarray = None
    termination_cause: str = None
    termination_step: int = None
    initial_base_height: float = None
    initial_joint_vel: np.ndarray = None
    dr_sample: object = None

    @property
    def terminated_early(self):
        return self.termination_cause != "completed"

    @property
    def jump_duration(self):
        return self.reference.jump_duration

    def target_velocity_at(self, local_j):
        """Commanded horizontal velocity at log row j: target / demo
        duration before landing, zero afterwards."""
        step = self.start_index + 1 + local_j
        if self.i_land is not None and step >= self.i_land:
            return np.zeros(2)
        return self.target / self.jump_duration

    def finalize(self):
        for name in (
            "base_pos",
            "base_quat",
            "base_vel",
            "joint_pos",
            "joint_vel",
            "raw_action",
            "filtered_action",
            "q_des",
            "contact",
            "reward",
            "motor_energy",
            "peak_power",
            "peak_torque",
        ):
            setattr(self, name, np.asarray(getattr(self, name)))
        if self.inner_torque:
            self.inner_power = np.concatenate(self.inner_power)
            self.inner_torque = np.concatenate(self.inner_torque)
            self.inner_joint_vel = np.concatenate(self.inner_joint_vel)
        return self


class JumpEnv:
    """One environment instance; owns its RNG stream and simulator."""

    def __init__(
        self,
        reference,
        stage,
        model=None,
        springs=None,
        actuator=None,
        contact=None,
        seed=0,
        action_filter_beta=0.6,
        residual_scale_floor=0.2,
        residual_scale_cap=0.4,
        flight_steps_for_landing=3,
        trace=False,
        sim_backend="auto",
    ):
        self.reference = reference
        self.stage = stage
        self.model = model or rb.RobotModel()
        self.springs = springs if springs is not None else rb.SpringParams()
        self.actuator = actuator or sw.ActuatorConfig()
        self.contact = contact or sw.ContactConfig()
        self.rng = np.random.default_rng(seed)
        self.beta = float(action_filter_beta)
        self.residual_scale = reference.residual_scale(
            residual_scale_floor, residual_scale_cap
        )
        self.flight_steps_for_landing = int(flight_steps_for_landing)
        self.trace = trace
        self.sim_backend = sim_backend
        self.horizon = stage.episode_steps or reference.num_steps
        self.dt = reference.dt
        self._world = None
        self.state = None
        self.log = None

    # -- protocol surface ---------------------------------------------------

    @property
    def action_dim(self):
        return rb.N_JOINTS

    @property
    def observation_dim(self):
        return OBS_DIM

    @property
    def input_dim(self):
        return HISTORY_LEN * (OBS_DIM + rb.N_JOINTS)

    def observation_scale(self):
        """Suggested per-component input scaling for function approximators."""
        scale = np.ones(OBS_DIM)
        scale[12:24] = 0.1  # joint velocities, rad/s
        scale[24:27] = 0.5  # base velocity, m/s
        scale[27:30] = 0.25  # base angular velocity, rad/s
        return scale

    # -- episode control ----------------------------------------------------

    def reset(self, target=None):
        """Start a new episode per the stage configuration.

        Args:
            target: optional commanded landing displacement overriding the
                stage's task sampler (used by evaluation sweeps).
        """
        stage = self.stage
        dr_sample = None
        model, springs, actuator, contact = (
            self.model,
            self.springs,
            self.actuator,
            self.contact,
        )
        if stage.domain_randomization is not None:
            dr_sample = sample_domain_randomization(
                stage.domain_randomization, self.rng, springs.enabled
            )
            model, springs, actuator, contact = apply_domain_randomization(
                dr_sample, model, springs, actuator, contact
            )
        terrain = self._sample_terrain(model)
        com_offset = dr_sample.com_offset if dr_sample is not None else np.zeros(3)
        self._world = sw.SimWorld(
            model=model,
            springs=springs,
            terrain=terrain,
            actuator=actuator,
            contact=contact,
            com_offset=com_offset,
            backend=self.sim_backend,
        )
        if target is not None:
            self.target = np.asarray(target, dtype=float).copy()
        else:
            self.target = sample_task(stage, self.rng, self.reference)

        if stage.use_rsi and stage.name == "imitation":
            self.state, start = self._reset_with_rsi()
        else:
            self.state, start = self._reset_standing(model, terrain, dr_sample)
        self.start_index = start
        self.i = start
        self._filtered = np.zeros(rb.N_JOINTS)
        self._prev_dq = self.state.dq.copy()
        self._airborne_streak = 0
        self._mismatch_time = np.zeros(rb.N_LEGS)
        self._done = False
        self.log = EpisodeLog(
            reference=self.reference,
            target=self.target.copy(),
            dt=self.dt,
            start_index=start,
            horizon=self.horizon,
        )
        self.log.initial_base_height = float(self.state.base_pos[2])
        self.log.initial_joint_vel = self.state.dq.copy()
        self.log.dr_sample = dr_sample
        self._history = np.zeros((HISTORY_LEN, OBS_DIM + rb.N_JOINTS))
        obs = self._observe()
        self._history[:, :OBS_DIM] = obs  # pre-episode slots repeat the
        # initial observation with zero actions
        return self.policy_input()

    def _sample_terrain(self, model):
        stage = self.stage
        if not stage.use_box_terrain:
            return flat_terrain(0.0)
        for _ in range(32):
            terrain = make_uneven_terrain(self.rng, stage.terrain_epsilon)
            # equalize left/right boxes under the initial stance so height
            # steps at reset occur only between front and rear legs
            hips = model.hip_offsets
            fl = terrain.height_at(hips[0, 0], hips[0, 1])
            rl = terrain.height_at(hips[2, 0], hips[2, 1])
            terrain.set_height_under(hips[1, 0], hips[1, 1], fl)
            terrain.set_height_under(hips[3, 0], hips[3, 1], rl)
            try:
                sw.settle_on_terrain(
                    self.model, terrain, self._initial_com_height(), contact_cfg=self.contact
                )
                return terrain
            except rb.OutOfWorkspaceError:
                continue
        raise RuntimeError("could not sample a standable terrain in 32 tries")

    def _initial_com_height(self):
        return float(self.reference.com_pos[0, 2])

    def _reset_standing(self, model, terrain, dr_sample):
        state, _ = sw.settle_on_terrain(
            model, terrain, self._initial_com_height(), contact_cfg=self.contact
        )
        if dr_sample is not None:
            state.q = model.clamp_joints(state.q + dr_sample.joint_noise)
            state.dq = state.dq + dr_sample.joint_vel_noise
            state.base_vel = state.base_vel + dr_sample.base_vel_noise
        return state, 0

    def _reset_with_rsi(self):
        """Sample a start state uniformly along the demonstration's stance.

        The base starts lower by the static penalty penetration so the
        contact model carries the sampled stance load immediately.
        """
        ref = self.reference
        start = int(self.rng.integers(0, ref.i_air + 1))
        q = ref.q_ref[start].copy()
        dq = ref.joint_velocity_ref(start)
        pos = ref.com_pos[start].copy()
        pos[2] -= self._world.total_mass * 9.81 / (
            rb.N_LEGS * self._world.contact.normal_stiffness
        )
        feet_w = pos + rb.fk_all_legs(self._world.model, q)
        state = sw.SimState(
            base_pos=pos,
            base_quat=ref.orientation[start].copy(),
            base_vel=ref.com_vel[start].copy(),
            base_angvel=np.zeros(3),
            q=q,
            dq=dq,
            foot_contact=ref.contact_ref[start].copy(),
            time=start * self.dt,
            foot_anchor=feet_w[:, :2].copy(),
        )
        return state, start

    # -- action pipeline ----------------------------------------------------

    def desired_joints(self, raw_action):
        """Filtered residual action to joint command (clipped to limits)."""
        raw = np.clip(np.asarray(raw_action, dtype=float), -1.0, 1.0)
        self._filtered = self.beta * raw + (1.0 - self.beta) * self._filtered
        idx = min(self.i, len(self.reference) - 1)
        q_des = self.reference.q_ref[idx] + self._filtered * self.residual_scale
        return self.model.clamp_joints(q_des), raw

    def step(self, action):
        """Advance one policy period. Returns (policy_input, reward, done, info)."""
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        q_des, raw = self.desired_joints(action)
        cause = None
        try:
            self.state, info_step = self._world.step(self.state, q_des, trace=self.trace)
        except sw.SimulationDivergedError:
            cause = "diverged"
            info_step = sw.StepInfo()
        self.i += 1
        local = self.i - self.start_index - 1
        state = self.state

        self._update_phases()
        if cause is None:
            cause = self._check_termination()
        done = cause is not None or self.i >= self.horizon
        if done and cause is None:
            cause = "completed"

        reward = self._step_reward(local, cause, done)
        self._record(raw, q_des, reward, info_step)
        info = {}
        if done:
            self._done = True
            self.log.termination_cause = cause
            self.log.termination_step = self.i
            self.log.finalize()
            info = {
                "termination_cause": cause,
                "episode_steps": local + 1,
                "landed_position": self.log.landed_position,
                "target": self.target.copy(),
            }
        self._push_history(raw)
        return self.policy_input(), reward, done, info

    def _update_phases(self):
        in_air = not self.state.foot_contact.any()
        if in_air:
            self._airborne_streak += 1
            if self.log.i_air is None:
                self.log.i_air = self.i
        else:
            if (
                self._airborne_streak >= self.flight_steps_for_landing
                and self.log.i_land is None
            ):
                self.log.i_land = self.i
                self.log.landed_position = self.state.base_pos[:2].copy()
            self._airborne_streak = 0

    def _check_termination(self):
        """Ordered checks; at most one cause fires per step."""
        state = self.state
        if self._world.has_illegal_contact(state):
            return "illegal_contact"
        w, x, y, z = state.base_quat
        cos_tilt = 1.0 - 2.0 * (x * x + y * y)
        if cos_tilt < np.cos(self.stage.termination.fall_angle):
            return "fell"
        term = self.stage.termination
        if term.contact_mismatch_enabled:
            idx = min(self.i, len(self.reference) - 1)
            ref_contact = self.reference.contact_ref[idx]
            if term.contact_match_mode == "per_foot":
                mismatch = state.foot_contact != ref_contact
            else:
                mismatch = np.full(
                    rb.N_LEGS, state.foot_contact.any() != ref_contact.any()
                )
            self._mismatch_time = np.where(
                mismatch, self._mismatch_time + self.dt, 0.0
            )
            if np.any(self._mismatch_time > term.contact_mismatch_window + 1e-9):
                return "contact_mismatch"
        if (
            term.landing_error_enabled
            and self.log.i_land == self.i
            and self.log.landed_position is not None
        ):
            err = float(np.linalg.norm(self.target - self.log.landed_position))
            if err > term.landing_error_threshold(self.target):
                return "landing_error"
        return None

    def _step_reward(self, local, cause, done):
        cfg = self.stage.reward
        state = self.state
        value, parts = rw.imitation_step_reward(
            cfg, self.reference, self.i, state.q, state.base_pos, state.base_quat,
            self.horizon,
        )
        if self.log.i_land is not None and self.i >= self.log.i_land:
            target_vel = np.zeros(2)
        else:
            target_vel = self.target / self.reference.jump_duration
        vel_r = rw.velocity_step_reward(cfg, target_vel, state.base_vel[:2], self.horizon)
        smooth_p = 0.0
        if self.log.i_air is not None and self.i >= self.log.i_air:
            smooth_p = rw.smoothness_step_penalty(cfg, state.dq, self._prev_dq, self.dt)
        land_p = 0.0
        if self.log.i_land is not None and self.i >= self.log.i_land:
            land_p = rw.post_landing_step_penalty(cfg, state.base_vel[:2])
        self._prev_dq = state.dq.copy()
        reward = value + vel_r - smooth_p - land_p
        terminal_parts = {}
        if done:
            early = cause != "completed"
            r_land = rw.landing_reward(cfg, self.target, self.log.landed_position, early)
            r_surv = rw.survival_reward(cfg, early)
            reward += r_land + r_surv
            terminal_parts = {"landing": r_land, "survival": r_surv}
        self._last_parts = {
            "imitation": value,
            "kernels": parts,
            "velocity": vel_r,
            "smooth_penalty": smooth_p,
            "post_landing_penalty": land_p,
            **terminal_parts,
        }
        return reward

    def _record(self, raw, q_des, reward, info_step):
        log = self.log
        state = self.state
        log.base_pos.append(state.base_pos.copy())
        log.base_quat.append(state.base_quat.copy())
        log.base_vel.append(state.base_vel.copy())
        log.joint_pos.append(state.q.copy())
        log.joint_vel.append(state.dq.copy())
        log.raw_action.append(raw.copy())
        log.filtered_action.append(self._filtered.copy())
        log.q_des.append(q_des.copy())
        log.contact.append(state.foot_contact.copy())
        log.reward.append(reward)
        log.reward_parts.append(self._last_parts)
        log.motor_energy.append(info_step.motor_energy)
        log.peak_power.append(info_step.peak_power)
        log.peak_torque.append(info_step.peak_torque)
        if self.trace and info_step.inner_torque is not None:
            log.inner_power.append(info_step.inner_power)
            log.inner_torque.append(info_step.inner_torque)
            log.inner_joint_vel.append(info_step.inner_joint_vel)

    # -- observations -------------------------------------------------------

    def _observe(self):
        s = self.state
        obs = np.empty(OBS_DIM)
        obs[:12] = s.q
        obs[12:24] = s.dq
        obs[24:27] = s.base_vel
        obs[27:30] = s.base_angvel
        obs[30:34] = s.base_quat
        obs[34] = (self.horizon - self.i) / self.horizon
        obs[35:37] = self.target
        return obs

    def _push_history(self, action):
        self._history[:-1] = self._history[1:]
        self._history[-1, :OBS_DIM] = self._observe()
        self._history[-1, OBS_DIM:] = action

    def policy_input(self):
        """Flattened last-20 (observation, action) history, newest last."""
        return self._history.ravel().copy()


def save_episode_trace(log, path):
    """Dump an episode as columnar text (one row per policy step)."""
    with open(path, "w") as f:
        f.write("# jumprl-episode 1" + "\n")
        f.write(f"# dt {float(log.dt)!r}" + "\n")
        f.write(f"# start_index {log.start_index}" + "\n")
        f.write(f"# termination {log.termination_cause}" + "\n")
        f.write(
            "# columns t base_pos[3] base_quat[4] base_vel[3] q[12] dq[12] "
            "raw_action[12] q_des[12] contact[4] reward" + "\n"
        )
        for j in range(len(log.base_pos)):
            t = (log.start_index + 1 + j) * log.dt
            row = [t]
            row += list(log.base_pos[j])
            row += list(log.base_quat[j])
            row += list(log.base_vel[j])
            row += list(log.joint_pos[j])
            row += list(log.joint_vel[j])
            row += list(log.raw_action[j])
            row += list(log.q_des[j])
            row += [float(c) for c in log.contact[j]]
            row += [log.reward[j]]
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def playback_episode(env, actions=None):
    """Run one episode with zero (or provided) residual actions.

    Returns the finished EpisodeLog. With zero actions the joint commands
    equal the demonstration's references at every step.
    """
    env.reset()
    done = False
    k = 0
    while not done:
        a = np.zeros(env.action_dim) if actions is None else actions[k]
        _, _, done, _ = env.step(a)
        k += 1
    return env.log
