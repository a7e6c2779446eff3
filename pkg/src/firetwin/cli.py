"""Command line entry point: gen / train / eval / ablate / replay / plot."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evalkit
from .config import RunConfig, file_hash, write_manifest
from .env import FireUavEnv, read_log
from .rl import MultiInputActorCritic, load_into, train
from .rl.train import episode_seed
from .semantic import RemoteScorer
from .sensor import save_png
from .world import World, generate_fuel, generate_terrain, save_scenario, write_ascii_grid


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.from_json_file(args.config)
    else:
        config = RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "variant", None):
        config.variant = args.variant
    if getattr(args, "task", None):
        config.task = args.task
    if getattr(args, "backend", None):
        config.scorer.backend = args.backend
    if getattr(args, "total_timesteps", None):
        config.ppo.total_timesteps = args.total_timesteps
    if getattr(args, "out", None):
        config.out_dir = args.out
    endpoint = os.environ.get("SCORER_URL")
    if endpoint:
        config.scorer.endpoint = endpoint
    return config.validate()


def _check_remote(config: RunConfig):
    if config.scorer.backend != "remote":
        return
    scorer = RemoteScorer(config.scorer.endpoint, timeout=config.scorer.timeout)
    if not scorer.health_check():
        raise SystemExit(
            f"remote scorer at {config.scorer.endpoint} failed its health check")


def _build_env(config: RunConfig, task: int | None = None,
               variant: str | None = None) -> FireUavEnv:
    return evalkit.make_env(
        variant or config.variant, task or config.task,
        world_config=replace(config.world), env_config=config.env,
        scorer_config=config.scorer, weights=config.reward,
        uav_config=config.uav, energy_params=config.energy,
        skip_mode=config.skip_mode)


def cmd_gen(args) -> int:
    config = _load_config(args)
    if args.flat:
        config.world.relief = 0.0
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    terrain_name = fuel_name = None
    if args.rasters:
        terrain = generate_terrain(config.world)
        fuel = generate_fuel(config.world)
        terrain_name, fuel_name = "elevation.asc", "fuel.asc"
        write_ascii_grid(out / terrain_name, terrain.elevation, config.world.cell_size)
        write_ascii_grid(out / fuel_name, fuel.load, config.world.cell_size)
    scenario_path = out / "scenario.json"
    save_scenario(scenario_path, config.world,
                  config.wind, terrain_asc=terrain_name, fuel_asc=fuel_name)
    config.save(out / "config.json")
    write_manifest(out / "manifest.json", config,
                   scenario_hash=file_hash(scenario_path))
    print(f"wrote scenario to {scenario_path}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    _check_remote(config)
    out = Path(config.out_dir) / f"train-{config.variant}-task{config.task}-s{config.seed}"
    out.mkdir(parents=True, exist_ok=True)
    env = _build_env(config)
    eval_env = _build_env(config)
    config.save(out / "config.json")
    write_manifest(out / "manifest.json", config)
    result = train(env, config.ppo, seed=config.seed, out_dir=out,
                   eval_env=eval_env, progress=not args.quiet)
    print(f"finished {result.n_updates} updates, {result.n_evals} evals; "
          f"checkpoints in {out}")
    return 0


def _load_policy(config: RunConfig, checkpoint: str) -> MultiInputActorCritic:
    env = _build_env(config)
    obs = env.reset(seed=episode_seed(config.seed, 0))
    policy = MultiInputActorCritic(
        image_hw=obs.image_top.shape[0],
        conv_channels=tuple(config.ppo.conv_channels),
        image_feat=config.ppo.image_feat,
        scalar_dim=len(obs.scalars),
        scalar_hidden=config.ppo.scalar_hidden,
        trunk_hidden=config.ppo.trunk_hidden)
    return load_into(policy, checkpoint)


def cmd_eval(args) -> int:
    config = _load_config(args)
    _check_remote(config)
    policy = _load_policy(config, args.checkpoint)
    out = Path(config.out_dir) / f"eval-{config.variant}-task{config.task}"
    out.mkdir(parents=True, exist_ok=True)
    env = _build_env(config)
    rows = []
    for spawn_idx in range(args.episodes):
        metrics, _ = evalkit.run_episode(
            env, policy, seed=episode_seed(1_000_000 + config.seed, spawn_idx))
        env.write_log(out / f"episode-{spawn_idx}.jsonl")
        rows.append({"variant": config.variant, "task": config.task,
                     "seed": spawn_idx, **metrics.__dict__})
    evalkit.write_results_csv(rows, out / "results.csv")
    print(evalkit.format_table(rows))
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    _check_remote(config)
    out = Path(config.out_dir) / "ablation"
    out.mkdir(parents=True, exist_ok=True)
    variants = args.variants.split(",") if args.variants else list(evalkit.VARIANTS)
    tasks = [int(t) for t in args.tasks.split(",")] if args.tasks else [1, 2, 3, 4, 5]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [0, 1, 2, 3, 4]
    rows = evalkit.run_ablation(
        variants, tasks, seeds, ppo_config=config.ppo,
        world_config=replace(config.world), env_config=config.env,
        scorer_config=config.scorer, weights=config.reward,
        eval_spawns=args.eval_spawns, out_dir=out, progress=not args.quiet)
    evalkit.write_results_csv(rows, out / "results.csv")
    table = evalkit.format_table(rows, budget=config.ppo.total_timesteps)
    (out / "summary.txt").write_text(table + "\n")
    print(table)
    return 0


def cmd_replay(args) -> int:
    config = _load_config(args)
    meta, rows = read_log(args.log)
    out = Path(config.out_dir) / "replay"
    out.mkdir(parents=True, exist_ok=True)
    env = _build_env(config, task=meta.get("task_id"))
    env.reset(seed=meta["seed"])
    mismatches = 0
    for i, row in enumerate(rows):
        result = env.step(row["action"])
        top, angled = env._last_views
        if args.frames:
            save_png(top, out / f"frame-{i:05d}-top.png")
            save_png(angled, out / f"frame-{i:05d}-angled.png")
        if env.log[-1]["obs_hash"] != row["obs_hash"]:
            mismatches += 1
        if result.done:
            break
    if mismatches:
        print(f"replay FAILED: {mismatches} frame hash mismatches")
        return 1
    print(f"replay ok: {len(rows)} steps reproduced bit-exactly")
    return 0


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    config = _load_config(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = Path(args.input)
    fig, ax = plt.subplots(figsize=(7, 4))
    if path.suffix == ".csv":
        data = np.genfromtxt(path, delimiter=",", names=True)
        steps = np.atleast_1d(data["step"])
        ax.plot(steps, np.atleast_1d(data["mean_return"]), label="mean return")
        ax.set_xlabel("environment steps")
        ax.set_ylabel("return")
    else:
        _, rows = read_log(path)
        rewards = [r["reward"] for r in rows]
        window = min(args.window, len(rewards))
        raw, avg = evalkit.emit_reward_curve(rewards, window=window)
        ax.plot(raw, alpha=0.35, label="raw reward")
        ax.plot(avg, label=f"{window}-step moving average")
        ax.set_xlabel("step")
        ax.set_ylabel("reward")
    ax.legend()
    target = out / (path.stem + ".svg")
    fig.savefig(target, format="svg")
    print(f"wrote {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="firetwin",
        description="wildfire digital twin + semantically shaped PPO monitoring agent")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("gen", help="write a world scenario")
    common(p)
    p.add_argument("--rasters", action="store_true", help="also write .asc rasters")
    p.add_argument("--flat", action="store_true", help="zero-relief world")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one variant")
    common(p)
    p.add_argument("--variant", choices=evalkit.VARIANTS)
    p.add_argument("--task", type=int, choices=range(1, 6))
    p.add_argument("--backend", choices=("synthetic", "remote"))
    p.add_argument("--total-timesteps", type=int, dest="total_timesteps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--variant", choices=evalkit.VARIANTS)
    p.add_argument("--task", type=int, choices=range(1, 6))
    p.add_argument("--backend", choices=("synthetic", "remote"))
    p.add_argument("--episodes", type=int, default=5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train + evaluate the variant grid")
    common(p)
    p.add_argument("--variants", help="comma list, default all six")
    p.add_argument("--tasks", help="comma list, default 1-5")
    p.add_argument("--seeds", help="comma list, default 0-4")
    p.add_argument("--backend", choices=("synthetic", "remote"))
    p.add_argument("--total-timesteps", type=int, dest="total_timesteps")
    p.add_argument("--eval-spawns", type=int, default=5)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("replay", help="re-render an episode log and verify hashes")
    common(p)
    p.add_argument("--log", required=True, help="episode JSONL")
    p.add_argument("--frames", action="store_true", help="write PNG frames")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("plot", help="SVG from a curve CSV or episode log")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--window", type=int, default=50)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
