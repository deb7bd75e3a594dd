"""YAML configuration loading for the physical and training parameters.

One file, one optional mapping per section; omitted keys keep the built-in
defaults. Sections: robot, springs, actuator, contact, task, slip, ppo, env,
stages (per-stage field overrides). Unknown keys are rejected so typos fail
loudly. See README for the documented schema.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import yaml

from .ppo import PpoConfig
from .robot import RobotModel, SpringParams
from .simworld import ActuatorConfig, ContactConfig
from .slip import JumpTask, SlipParams
from .stages import make_stage

SECTIONS = ("robot", "springs", "actuator", "contact", "task", "slip", "ppo", "env", "stages")

ENV_DEFAULTS = {
    "action_filter_beta": 0.6,
    "residual_scale_floor": 0.2,
    "residual_scale_cap": 0.4,
    "flight_steps_for_landing": 3,
}


class ConfigError(ValueError):
    pass


def load_config(path=None):
    """Read and validate a config file; None gives the all-defaults config."""
    if path is None:
        return {}
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return data


def _build(cls, section, overrides, arrays=()):
    overrides = dict(overrides or {})
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"section {section!r}: unknown keys {sorted(unknown)}")
    for key in arrays:
        if key in overrides:
            overrides[key] = np.asarray(overrides[key], dtype=float)
    try:
        return cls(**overrides)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"section {section!r}: {err}") from err


def build_robot(cfg):
    return _build(
        RobotModel, "robot", cfg.get("robot"),
        arrays=("base_inertia", "hip_offsets", "joint_limits"),
    )


def build_springs(cfg, enabled=None):
    springs = _build(SpringParams, "springs", cfg.get("springs"))
    if enabled is not None:
        springs.enabled = enabled
    return springs


def build_actuator(cfg):
    return _build(ActuatorConfig, "actuator", cfg.get("actuator"))


def build_contact(cfg):
    return _build(ContactConfig, "contact", cfg.get("contact"))


def build_task(cfg, target=None):
    task = _build(JumpTask, "task", cfg.get("task"), arrays=("target_displacement",))
    if target is not None:
        task.target_displacement = np.asarray(target, dtype=float)
    return task


def build_slip(cfg, springs=None):
    section = dict(cfg.get("slip") or {})
    if springs is not None and "parallel_stiffness" not in section:
        if springs:
            section["parallel_stiffness"] = 500.0
            section.setdefault("leg_natural_length", 0.35)
    return _build(SlipParams, "slip", section)


def build_ppo(cfg, **overrides):
    section = dict(cfg.get("ppo") or {})
    section.update(overrides)
    if "hidden_sizes" in section:
        section["hidden_sizes"] = tuple(section["hidden_sizes"])
    return _build(PpoConfig, "ppo", section)


def build_env_options(cfg):
    section = dict(cfg.get("env") or {})
    unknown = set(section) - set(ENV_DEFAULTS)
    if unknown:
        raise ConfigError(f"section 'env': unknown keys {sorted(unknown)}")
    out = dict(ENV_DEFAULTS)
    out.update(section)
    return out


def build_stage(cfg, name):
    overrides = dict((cfg.get("stages") or {}).get(name) or {})
    try:
        return make_stage(name, **overrides)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"stage {name!r}: {err}") from err
