"""Command-line entry point.

Subcommands: refgen (trajectory optimization to a reference file), train
(staged PPO), eval (policy metric sweeps), playback (PD playback of the
demonstration), compare (matched rigid-vs-spring playback).

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback

import numpy as np


def _add_common(parser):
    parser.add_argument("--config", default=None, help="YAML config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--springs", choices=("on", "off"), default="on",
        help="parallel elastic actuation on the robot",
    )
    parser.add_argument("--out", default="out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jumprl",
        description="Quadruped jumping: trajectory optimization, staged RL, evaluation.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("refgen", help="generate the jump demonstration")
    _add_common(p)
    p.add_argument("--target-x", type=float, default=0.4, help="flight displacement, m")
    p.add_argument("--target-y", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--landing-hold", type=float, default=0.5)
    p.add_argument("--reference", default=None, help="output file (default <out>/demo.ref)")

    p = sub.add_parser("train", help="staged PPO training")
    _add_common(p)
    p.add_argument("--stage", default="imitation", help="comma-separated stage names")
    p.add_argument("--steps", type=int, default=None, help="env steps per stage")
    p.add_argument("--workers", type=int, default=8, help="environment instances")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--reference", default=None, help="reference file (default: regenerate)")
    p.add_argument("--resume", default=None, help="checkpoint to warm-start from")
    p.add_argument("--epsilon", type=float, default=None, help="terrain height range, m")

    p = sub.add_parser("eval", help="metric sweep with a trained policy")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--stage", default="generalization")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--grid", action="store_true", help="use the fixed target grid")

    p = sub.add_parser("playback", help="PD playback of the demonstration")
    _add_common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.0)

    p = sub.add_parser("compare", help="matched rigid-vs-spring playback")
    _add_common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--trials", type=int, default=8)
    return parser


def cmd_refgen(args, cfg):
    from .config import build_robot, build_slip, build_task
    from .reference import generate_reference, save_reference

    springs = args.springs == "on"
    model = build_robot(cfg)
    task = build_task(cfg, target=[args.target_x, args.target_y])
    slip = build_slip(cfg, springs=springs)
    ref = generate_reference(task, slip, model, dt=args.dt, landing_hold=args.landing_hold)
    os.makedirs(args.out, exist_ok=True)
    path = args.reference or os.path.join(args.out, "demo.ref")
    save_reference(ref, path)
    landed = ref.com_pos[ref.i_land, :2] - ref.com_pos[0, :2]
    print(f"reference written to {path}")
    print(
        f"  samples={len(ref)} takeoff_index={ref.i_air} touchdown_index={ref.i_land} "
        f"demo_landing=({landed[0]:.3f}, {landed[1]:.3f}) m"
    )
    return 0


def _load_or_generate_reference(args, cfg, springs):
    from .config import build_robot, build_slip, build_task
    from .reference import generate_reference, load_reference

    if getattr(args, "reference", None):
        return load_reference(args.reference)
    model = build_robot(cfg)
    return generate_reference(build_task(cfg), build_slip(cfg, springs=springs), model)


def cmd_train(args, cfg):
    from .config import (
        build_actuator,
        build_contact,
        build_env_options,
        build_ppo,
        build_robot,
        build_stage,
    )
    from .jumpenv import JumpEnv
    from .ppo import desk_scale_config, load_checkpoint, save_curves, train

    springs_on = args.springs == "on"
    stage_names = [s.strip() for s in args.stage.split(",") if s.strip()]
    stages = []
    for name in stage_names:
        stage = build_stage(cfg, name)
        if args.epsilon is not None and stage.use_box_terrain:
            stage.terrain_epsilon = args.epsilon
        stages.append(stage)
    reference = _load_or_generate_reference(args, cfg, springs_on)
    model = build_robot(cfg)
    env_opts = build_env_options(cfg)

    if args.profile == "desk":
        ppo_cfg = desk_scale_config(num_envs=args.workers)
        for key, value in (cfg.get("ppo") or {}).items():
            setattr(ppo_cfg, key, value)
    else:
        ppo_cfg = build_ppo(cfg, num_envs=args.workers)

    def env_factory(stage, k, seed):
        from .config import build_springs as _springs

        return JumpEnv(
            reference,
            stage,
            model=model,
            springs=_springs(cfg, enabled=springs_on),
            actuator=build_actuator(cfg),
            contact=build_contact(cfg),
            seed=abs(hash(seed)) % 2**31,
            **env_opts,
        )

    net = None
    if args.resume:
        net, _ = load_checkpoint(args.resume)
    os.makedirs(args.out, exist_ok=True)

    def progress(row):
        print(
            f"[{row['stage']}] steps={row['env_steps']} return={row['mean_return']:.3f} "
            f"completion={row['completion_rate']:.2f}",
            flush=True,
        )

    result = train(
        env_factory, stages, ppo_cfg, seed=args.seed,
        steps_per_stage=args.steps, net=net, progress=progress,
    )
    for name, blob in result.checkpoints.items():
        path = os.path.join(args.out, f"policy_{name}.ckpt")
        with open(path, "wb") as f:
            f.write(blob)
        print(f"checkpoint written to {path}")
    save_curves(result.curves, os.path.join(args.out, "curves.txt"))
    print(f"curves written to {os.path.join(args.out, 'curves.txt')}")
    return 0


def cmd_eval(args, cfg):
    from .evalrun import ExperimentConfig, export_records, run_evaluation
    from .metrics import success_rate_metric
    from .ppo import load_checkpoint
    from .reference import load_reference

    net, _ = load_checkpoint(args.checkpoint)
    reference = load_reference(args.reference)
    exp = ExperimentConfig(
        stage_name=args.stage,
        springs_enabled=args.springs == "on",
        trials=args.trials,
        terrain_epsilon=args.epsilon,
        seed=args.seed,
        out_dir=args.out,
        target_grid=args.grid,
    )
    records = run_evaluation(exp, reference, net=net)
    path = export_records(records, args.out)
    rate, (lo, hi) = success_rate_metric(records)
    print(f"{len(records)} trials -> {path}")
    print(f"success rate {rate:.3f} (95% CI [{lo:.3f}, {hi:.3f}])")
    return 0


def cmd_playback(args, cfg):
    from .evalrun import ExperimentConfig, export_records, run_playback
    from .metrics import success_rate_metric
    from .reference import load_reference

    reference = load_reference(args.reference)
    exp = ExperimentConfig(
        stage_name="imitation",
        springs_enabled=args.springs == "on",
        trials=args.trials,
        terrain_epsilon=args.epsilon,
        seed=args.seed,
        out_dir=args.out,
    )
    records = run_playback(exp, reference)
    path = export_records(records, args.out)
    rate, _ = success_rate_metric(records)
    errors = [r.landing_error for r in records if r.success]
    mean_err = float(np.mean(errors)) if errors else float("nan")
    print(f"{len(records)} playback trials -> {path}")
    print(f"completion {rate:.2f}, mean landing error {mean_err:.3f} m")
    return 0


def cmd_compare(args, cfg):
    from .evalrun import run_comparison
    from .reference import load_reference

    reference = load_reference(args.reference)
    result = run_comparison(reference, trials=args.trials, seed=args.seed, out_dir=args.out)
    print(f"matched playback over {args.trials} trials (rigid vs spring):")
    for name, row in result.summary().items():
        print(
            f"  {name:14s} rigid={row['rigid']:9.3f} spring={row['spring']:9.3f} "
            f"change={100 * row['relative_change']:+.1f}%"
        )
    return 0


COMMANDS = {
    "refgen": cmd_refgen,
    "train": cmd_train,
    "eval": cmd_eval,
    "playback": cmd_playback,
    "compare": cmd_compare,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 1 if err.code not in (0, None) else 0
    from .config import ConfigError, load_config

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.mode](args, cfg)
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
