"""Curriculum stages: reward weights, termination rules, task and terrain
samplers, and per-episode domain randomization."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .rewards import RewardConfig

STAGE_NAMES = ("imitation", "generalization", "uneven", "domain_rand")


@dataclass
class TerminationConfig:
    fall_angle: float = np.radians(30.0)
    contact_mismatch_window: float = 0.12  # seconds, strictly-more-than
    contact_mismatch_enabled: bool = False
    contact_match_mode: str = "any"  # "any": aggregate contact; "per_foot"

    landing_error_enabled: bool = False
    landing_alpha: float = 0.2
    landing_beta: float = 0.05  # meters

    def landing_error_threshold(self, target):
        return self.landing_alpha * float(np.linalg.norm(target)) + self.landing_beta


@dataclass
class DomainRandomizationConfig:
    """Per-episode parameter ranges; every draw is one uniform sample."""

    mass_scale: tuple = (0.9, 1.15)
    com_offset: float = 0.03  # m, per-axis uniform in [-x, x]
    friction: tuple = (0.4, 1.0)
    restitution_damping_scale: tuple = (0.5, 1.5)  # multiplies contact damping
    motor_strength: tuple = (0.85, 1.1)
    coulomb_torque: tuple = (0.0, 1.0)
    spring_stiffness_scale: tuple = (0.8, 1.2)
    spring_damping_scale: tuple = (0.5, 2.0)
    spring_rest_offset: float = 0.05  # rad, per-joint-type uniform
    initial_joint_noise: float = 0.03  # rad
    initial_joint_vel_noise: float = 0.1  # rad/s
    initial_base_vel_noise: float = 0.05  # m/s

    def __post_init__(self):
        for name in (
            "mass_scale",
            "friction",
            "restitution_damping_scale",
            "motor_strength",
            "coulomb_torque",
            "spring_stiffness_scale",
            "spring_damping_scale",
        ):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} range must be finite and ordered")


@dataclass
class StageConfig:
    name: str
    reward: RewardConfig = field(default_factory=RewardConfig)
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    fixed_target: bool = True  # imitation: always the demo's landing spot
    target_range_x: tuple = (0.0, 1.0)
    target_range_y: tuple = (-0.3, 0.3)
    terrain_epsilon: float = 0.0
    use_box_terrain: bool = False
    domain_randomization: DomainRandomizationConfig = None
    use_rsi: bool = True
    episode_steps: int = None  # None: follow the reference length

    def validate(self):
        if self.name not in STAGE_NAMES:
            raise ValueError(f"unknown stage {self.name!r}")
        if self.name == "imitation":
            assert self.termination.contact_mismatch_enabled
            assert not self.termination.landing_error_enabled
        else:
            assert not self.termination.contact_mismatch_enabled
            assert self.termination.landing_error_enabled
            assert self.reward.base_pos_weight == 0.0
        return self


def make_stage(name, **overrides):
    """Build one curriculum stage with its documented defaults."""
    if name == "imitation":
        cfg = StageConfig(
            name=name,
            reward=RewardConfig(velocity_weight=0.0),
            termination=TerminationConfig(contact_mismatch_enabled=True),
            fixed_target=True,
            use_rsi=True,
        )
    elif name == "generalization":
        cfg = StageConfig(
            name=name,
            reward=RewardConfig(base_pos_weight=0.0, velocity_weight=0.5),
            termination=TerminationConfig(landing_error_enabled=True),
            fixed_target=False,
            use_rsi=False,
        )
    elif name == "uneven":
        cfg = StageConfig(
            name=name,
            reward=RewardConfig(base_pos_weight=0.0, velocity_weight=0.5),
            termination=TerminationConfig(landing_error_enabled=True),
            fixed_target=False,
            use_rsi=False,
            use_box_terrain=True,
            terrain_epsilon=0.04,
        )
    elif name == "domain_rand":
        cfg = StageConfig(
            name=name,
            reward=RewardConfig(base_pos_weight=0.0, velocity_weight=0.5),
            termination=TerminationConfig(landing_error_enabled=True),
            fixed_target=False,
            use_rsi=False,
            use_box_terrain=True,
            terrain_epsilon=0.04,
            domain_randomization=DomainRandomizationConfig(),
        )
    else:
        raise ValueError(f"unknown stage {name!r}")
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ValueError(f"StageConfig has no field {key!r}")
        setattr(cfg, key, value)
    return cfg.validate()


def default_stage_sequence():
    return [make_stage(name) for name in STAGE_NAMES]


def sample_task(stage, rng, reference):
    """Draw the commanded landing displacement for one episode.

    The imitation stage always commands the demonstration's own landed
    displacement; later stages sample uniformly from the configured ranges.
    """
    if stage.fixed_target:
        demo = (
            reference.com_pos[reference.i_land, :2] - reference.com_pos[0, :2]
        )
        return demo.copy()
    x = rng.uniform(*stage.target_range_x)
    y = rng.uniform(*stage.target_range_y)
    return np.array([x, y])


@dataclass
class DomainRandomizationSample:
    mass_scale: float = 1.0
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    friction: float = None
    contact_damping_scale: float = 1.0
    motor_strength: float = 1.0
    coulomb_torque: float = 0.0
    spring_stiffness_scale: float = 1.0
    spring_damping_scale: float = 1.0
    spring_rest_offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    joint_noise: np.ndarray = None
    joint_vel_noise: np.ndarray = None
    base_vel_noise: np.ndarray = None


def sample_domain_randomization(cfg, rng, springs_enabled=True):
    """One independent draw per parameter; spring draws only when sprung."""
    sample = DomainRandomizationSample(
        mass_scale=rng.uniform(*cfg.mass_scale),
        com_offset=rng.uniform(-cfg.com_offset, cfg.com_offset, size=3),
        friction=rng.uniform(*cfg.friction),
        contact_damping_scale=rng.uniform(*cfg.restitution_damping_scale),
        motor_strength=rng.uniform(*cfg.motor_strength),
        coulomb_torque=rng.uniform(*cfg.coulomb_torque),
        joint_noise=rng.uniform(-cfg.initial_joint_noise, cfg.initial_joint_noise, 12),
        joint_vel_noise=rng.uniform(
            -cfg.initial_joint_vel_noise, cfg.initial_joint_vel_noise, 12
        ),
        base_vel_noise=rng.uniform(
            -cfg.initial_base_vel_noise, cfg.initial_base_vel_noise, 3
        ),
    )
    if springs_enabled:
        sample.spring_stiffness_scale = rng.uniform(*cfg.spring_stiffness_scale)
        sample.spring_damping_scale = rng.uniform(*cfg.spring_damping_scale)
        sample.spring_rest_offset = rng.uniform(
            -cfg.spring_rest_offset, cfg.spring_rest_offset, 2
        )
    return sample


def apply_domain_randomization(sample, model, springs, actuator, contact):
    """Return randomized copies of the physical configuration objects."""
    new_model = dataclasses.replace(
        model,
        base_mass=model.base_mass * sample.mass_scale,
        base_inertia=model.base_inertia * sample.mass_scale,
    )
    new_springs = dataclasses.replace(
        springs,
        stiffness_thigh=springs.stiffness_thigh * sample.spring_stiffness_scale,
        stiffness_calf=springs.stiffness_calf * sample.spring_stiffness_scale,
        damping=springs.damping * sample.spring_damping_scale,
        rest_angle_thigh=springs.rest_angle_thigh + sample.spring_rest_offset[0],
        rest_angle_calf=springs.rest_angle_calf + sample.spring_rest_offset[1],
    )
    new_actuator = dataclasses.replace(
        actuator,
        motor_strength_scale=actuator.motor_strength_scale * sample.motor_strength,
        coulomb_friction_torque=sample.coulomb_torque,
    )
    new_contact = dataclasses.replace(
        contact,
        friction_coeff=sample.friction
        if sample.friction is not None
        else contact.friction_coeff,
        normal_damping=contact.normal_damping * sample.contact_damping_scale,
    )
    return new_model, new_springs, new_actuator, new_contact
