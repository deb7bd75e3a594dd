"""Experiment orchestration: evaluation sweeps, demonstration playback, the
rigid-versus-spring comparison, CSV export, and plot emission."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import metrics as mx
from .jumpenv import JumpEnv
from .robot import RobotModel, SpringParams
from .stages import make_stage
from .svgplot import SvgFigure

CSV_VERSION = "jumprl-metrics 1"

TRIAL_COLUMNS = (
    "trial",
    "target_x",
    "target_y",
    "landed_x",
    "landed_y",
    "landing_error",
    "success",
    "termination_cause",
    "peak_height",
    "total_energy",
    "peak_power",
    "peak_torque",
    "episode_steps",
)

BIN_COLUMNS = (
    "bin_index",
    "distance_lo",
    "distance_hi",
    "trials",
    "successes",
    "mean_landing_error",
    "landing_error_ci",
    "mean_peak_height",
    "peak_height_ci",
    "mean_energy",
    "energy_ci",
    "mean_peak_power",
    "peak_power_ci",
    "success_rate",
    "success_lo",
    "success_hi",
)


@dataclass
class ExperimentConfig:
    stage_name: str = "generalization"
    springs_enabled: bool = True
    trials: int = 100
    terrain_epsilon: float = 0.0
    seed: int = 0
    out_dir: str = "out"
    deterministic_policy: bool = True
    target_grid: bool = False  # evaluate on the fixed x-y grid
    trace: bool = True


def target_grid():
    """x in {0, 0.1, ..., 1.0} by y in {-0.3, ..., 0.3}; covers the
    training task ranges."""
    xs = np.round(np.arange(0.0, 1.0 + 1e-9, 0.1), 10)
    ys = np.round(np.arange(-0.3, 0.3 + 1e-9, 0.1), 10)
    return [np.array([x, y]) for x in xs for y in ys]


def build_env(cfg, reference, model=None, stage=None, seed=None):
    stage = stage or make_stage(cfg.stage_name)
    if cfg.terrain_epsilon > 0.0 and not stage.use_box_terrain:
        stage.use_box_terrain = True
    if stage.use_box_terrain:
        stage.terrain_epsilon = cfg.terrain_epsilon
    return JumpEnv(
        reference,
        stage,
        model=model or RobotModel(),
        springs=SpringParams(enabled=cfg.springs_enabled),
        seed=cfg.seed if seed is None else seed,
        trace=cfg.trace,
    )


def policy_action(net, policy_input):
    mean, _, _ = net.forward(policy_input[None, :])
    return mean[0]


def run_episode(env, net=None, target=None):
    """One episode under the deterministic policy (or zero residuals)."""
    obs = env.reset(target=target)
    done = False
    while not done:
        action = np.zeros(env.action_dim) if net is None else policy_action(net, obs)
        obs, _, done, _ = env.step(action)
    return env.log


def run_playback(cfg, reference, model=None, stage=None):
    """PD playback trials of the demonstration (zero residual actions)."""
    env = build_env(cfg, reference, model=model, stage=stage)
    records = []
    for trial in range(cfg.trials):
        log = run_episode(env, net=None)
        records.append(mx.MetricsRecord.from_log(trial, log))
    return records


def run_evaluation(cfg, reference, net=None, model=None, stage=None):
    """Metric sweep; deterministic given the seed.

    Targets come from the fixed grid (cfg.target_grid) or the stage's task
    sampler; simulator divergence marks the trial failed and the sweep
    continues.
    """
    env = build_env(cfg, reference, model=model, stage=stage)
    targets = None
    if cfg.target_grid:
        grid = target_grid()
        targets = [grid[k % len(grid)] for k in range(cfg.trials)]
    records = []
    for trial in range(cfg.trials):
        target = targets[trial] if targets is not None else None
        log = run_episode(env, net=net, target=target)
        records.append(mx.MetricsRecord.from_log(trial, log))
    return records


# ---------------------------------------------------------------------------
# CSV and plots
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    if value is None:
        return "nan"
    return repr(float(value))


def write_trial_csv(records, path):
    with open(path, "w") as f:
        f.write(f"# {CSV_VERSION}\n")
        f.write(",".join(TRIAL_COLUMNS) + "\n")
        for r in records:
            landed = (
                (float("nan"), float("nan")) if r.landed is None else tuple(r.landed)
            )
            row = (
                r.trial,
                r.target[0],
                r.target[1],
                landed[0],
                landed[1],
                r.landing_error,
                r.success,
                r.termination_cause,
                r.peak_height,
                r.total_energy,
                r.peak_power,
                r.peak_torque,
                r.episode_steps,
            )
            f.write(",".join(_fmt(v) for v in row) + "\n")


def read_trial_csv(path):
    """Parse a per-trial CSV back into MetricsRecord objects."""
    records = []
    with open(path) as f:
        header = f.readline().strip()
        if header != f"# {CSV_VERSION}":
            raise ValueError(f"{path}: unknown CSV version header {header!r}")
        columns = f.readline().strip().split(",")
        if tuple(columns) != TRIAL_COLUMNS:
            raise ValueError(f"{path}: unexpected columns")
        for line in f:
            vals = line.strip().split(",")
            row = dict(zip(columns, vals))
            landed = np.array([float(row["landed_x"]), float(row["landed_y"])])
            records.append(
                mx.MetricsRecord(
                    trial=int(row["trial"]),
                    target=np.array([float(row["target_x"]), float(row["target_y"])]),
                    landed=None if np.isnan(landed).any() else landed,
                    landing_error=float(row["landing_error"]),
                    success=row["success"] == "1",
                    termination_cause=row["termination_cause"],
                    peak_height=float(row["peak_height"]),
                    total_energy=float(row["total_energy"]),
                    peak_power=float(row["peak_power"]),
                    peak_torque=float(row["peak_torque"]),
                    episode_steps=int(row["episode_steps"]),
                )
            )
    return records


def write_bin_csv(aggregates, path):
    with open(path, "w") as f:
        f.write(f"# {CSV_VERSION}\n")
        f.write(",".join(BIN_COLUMNS) + "\n")
        for b in aggregates:
            f.write(",".join(_fmt(getattr(b, c)) for c in BIN_COLUMNS) + "\n")


def emit_plots(records, out_dir, label=""):
    """Standard figure set from per-trial records; returns written paths."""
    aggs = mx.aggregate_by_distance(records)
    paths = []
    dist = np.array([0.5 * (b.distance_lo + b.distance_hi) for b in aggs])

    fig = SvgFigure(
        f"Landing error vs commanded distance {label}",
        "commanded distance [m]",
        "landing error [m]",
    )
    fig.scatter(
        [float(np.linalg.norm(r.target)) for r in records if r.success],
        [r.landing_error for r in records if r.success],
        label="trials",
    )
    mean = np.array([b.mean_landing_error for b in aggs])
    ci = np.array([b.landing_error_ci for b in aggs])
    fig.band(dist, mean - ci, mean + ci)
    fig.line(dist, mean, label="mean")
    paths.append(fig.save(os.path.join(out_dir, "landing_error.svg")))

    for field_name, ci_name, fname, ylabel in (
        ("mean_peak_height", "peak_height_ci", "peak_height.svg", "apex gain [m]"),
        ("mean_energy", "energy_ci", "energy.svg", "mechanical energy [J]"),
        ("mean_peak_power", "peak_power_ci", "peak_power.svg", "peak power [W]"),
    ):
        fig = SvgFigure(f"{ylabel} vs distance {label}", "commanded distance [m]", ylabel)
        mean = np.array([getattr(b, field_name) for b in aggs])
        ci = np.array([getattr(b, ci_name) for b in aggs])
        fig.band(dist, mean - ci, mean + ci)
        fig.line(dist, mean, label="mean")
        paths.append(fig.save(os.path.join(out_dir, fname)))

    fig = SvgFigure(f"Success rate {label}", "distance bin", "success rate")
    fig.bars(
        [f"{b.distance_lo:.2f}" for b in aggs], [b.success_rate for b in aggs]
    )
    paths.append(fig.save(os.path.join(out_dir, "success_rate.svg")))
    return paths


def export_records(records, out_dir, label=""):
    os.makedirs(out_dir, exist_ok=True)
    trial_path = os.path.join(out_dir, "trials.csv")
    write_trial_csv(records, trial_path)
    aggs = mx.aggregate_by_distance(records)
    write_bin_csv(aggs, os.path.join(out_dir, "bins.csv"))
    emit_plots(records, out_dir, label)
    return trial_path


# ---------------------------------------------------------------------------
# rigid vs spring comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonResult:
    rigid: list = field(default_factory=list)
    spring: list = field(default_factory=list)

    def summary(self):
        def agg(records, name):
            vals = [getattr(r, name) for r in records if r.success]
            return float(np.mean(vals)) if vals else float("nan")

        out = {}
        for name in ("peak_torque", "total_energy", "peak_power", "peak_height", "landing_error"):
            r = agg(self.rigid, name)
            s = agg(self.spring, name)
            out[name] = {
                "rigid": r,
                "spring": s,
                "relative_change": (s - r) / r if r and np.isfinite(r) else float("nan"),
            }
        return out


def run_comparison(reference, trials=8, seed=0, out_dir=None, model=None):
    """Matched playback of one reference with springs off and on."""
    result = ComparisonResult()
    for springs_on, bucket in ((False, result.rigid), (True, result.spring)):
        cfg = ExperimentConfig(
            stage_name="imitation",
            springs_enabled=springs_on,
            trials=trials,
            seed=seed,
            trace=True,
        )
        bucket.extend(run_playback(cfg, reference, model=model))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trial_csv(result.rigid, os.path.join(out_dir, "rigid_trials.csv"))
        write_trial_csv(result.spring, os.path.join(out_dir, "spring_trials.csv"))
        summary = result.summary()
        with open(os.path.join(out_dir, "comparison.csv"), "w") as f:
            f.write(f"# {CSV_VERSION}\n")
            f.write("metric,rigid,spring,relative_change\n")
            for name, row in summary.items():
                f.write(
                    f"{name},{_fmt(row['rigid'])},{_fmt(row['spring'])},"
                    f"{_fmt(row['relative_change'])}\n"
                )
    return result
