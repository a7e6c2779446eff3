"""Metrics, the six-variant ablation harness, and reward-curve utilities."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .env import EnvConfig, FireUavEnv, VariantFlags
from .reward import RewardWeights
from .rl import PpoConfig, train
from .rl.train import episode_seed, evaluate_policy, greedy_action
from .semantic import ScorerConfig
from .uav import EnergyModelParams, UavConfig
from .world import WorldConfig

VARIANTS = ("base_ppo", "vlm_only_shaping", "vlm_topdown_only",
            "vlm_angled_only", "vlm_unsegmented", "vlm_final")

FULL_BUDGET = 200000

RESULT_FIELDS = ("variant", "task", "seed", "total_reward", "pct_fov",
                 "ttd_seconds", "ttd_steps", "distance_m", "runtime_s")


@dataclass
class EpisodeMetrics:
    total_reward: float
    pct_fov: float
    ttd_seconds: float | None
    ttd_steps: int | None
    distance_m: float
    runtime_s: float


def compute_metrics(rows: list[dict], threshold_pixels: int, dt: float,
                    spawn=None, runtime_s: float = 0.0) -> EpisodeMetrics:
    """Episode metrics from a step log.

    TTD is the first step whose nadir fire pixel count reaches the threshold
    (absent if never); %FOV is the fraction of steps at or above it; distance
    is path length in the x-y plane.
    """
    if not rows:
        raise ValueError("empty episode log")
    total_reward = float(sum(r["reward"] for r in rows))
    visible = [r["fire_pixels"] >= threshold_pixels for r in rows]
    pct_fov = 100.0 * sum(visible) / len(rows)
    ttd_steps = None
    for r in rows:
        if r["fire_pixels"] >= threshold_pixels:
            ttd_steps = int(r["t"])
            break
    ttd_seconds = ttd_steps * dt if ttd_steps is not None else None
    positions = [r["pos"] for r in rows]
    if spawn is not None:
        positions = [list(spawn)] + positions
    distance = 0.0
    for a, b in zip(positions, positions[1:]):
        distance += float(np.hypot(b[0] - a[0], b[1] - a[1]))
    return EpisodeMetrics(total_reward=total_reward, pct_fov=pct_fov,
                          ttd_seconds=ttd_seconds, ttd_steps=ttd_steps,
                          distance_m=distance, runtime_s=runtime_s)


def variant_config(variant: str) -> VariantFlags:
    """Reward/observation flags for each ablation row."""
    table = {
        "base_ppo": VariantFlags(motion_terms=True, potential_angled=False,
                                 potential_topdown=False, directional=False),
        # semantic shaping only; base reward reduced to the collision term
        "vlm_only_shaping": VariantFlags(motion_terms=False, potential_angled=True,
                                         potential_topdown=False, directional=False),
        "vlm_topdown_only": VariantFlags(motion_terms=True, potential_angled=False,
                                         potential_topdown=False, directional=True),
        "vlm_angled_only": VariantFlags(motion_terms=True, potential_angled=True,
                                        potential_topdown=False, directional=False),
        # both views scored into the potential, no quadrant segmentation
        "vlm_unsegmented": VariantFlags(motion_terms=True, potential_angled=True,
                                        potential_topdown=True, directional=False),
        "vlm_final": VariantFlags(motion_terms=True, potential_angled=True,
                                  potential_topdown=False, directional=True),
    }
    if variant not in table:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return table[variant]


def run_episode(env: FireUavEnv, policy, seed: int,
                deterministic: bool = True) -> tuple[EpisodeMetrics, list[dict]]:
    """One evaluation episode; returns metrics and the step log."""
    rng = np.random.default_rng(seed)
    obs = env.reset(seed=seed)
    t0 = time.perf_counter()
    done = False
    while not done:
        logits, _ = policy.act_values(obs)
        if deterministic:
            action = greedy_action(logits)
        else:
            from .rl import sample_action
            action, _ = sample_action(logits, rng)
        result = env.step(action)
        done = result.done
        obs = result.observation
    runtime = time.perf_counter() - t0
    metrics = compute_metrics(env.log, env.detection_threshold,
                              env.world.config.dt, spawn=env.setup.spawn_pos,
                              runtime_s=runtime)
    return metrics, list(env.log)


def make_env(variant: str, task_id: int, *,
             world_config: WorldConfig | None = None,
             env_config: EnvConfig | None = None,
             scorer_config: ScorerConfig | None = None,
             weights: RewardWeights | None = None,
             uav_config: UavConfig | None = None,
             energy_params: EnergyModelParams | None = None,
             scorer=None, skip_mode: str = "reuse_reward") -> FireUavEnv:
    return FireUavEnv(world_config=world_config, env_config=env_config,
                      scorer_config=scorer_config, weights=weights,
                      flags=variant_config(variant), uav_config=uav_config,
                      energy_params=energy_params, task_id=task_id,
                      scorer=scorer, skip_mode=skip_mode)


def run_ablation(variants, tasks, seeds, *, ppo_config: PpoConfig,
                 world_config: WorldConfig | None = None,
                 env_config: EnvConfig | None = None,
                 scorer_config: ScorerConfig | None = None,
                 weights: RewardWeights | None = None,
                 train_task: int = 2, eval_spawns: int = 5,
                 out_dir=None, progress: bool = False) -> list[dict]:
    """Train each (variant, seed) once, then evaluate it on every task.

    Evaluation episodes reuse the same spawn-seed list across variants, so
    every variant sees bitwise-identical initial worlds per run index. Each
    result row is the spawn-mean of the episode metrics.
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    rows = []
    for variant in variants:
        for seed in seeds:
            t0 = time.perf_counter()
            env = make_env(variant, train_task, world_config=world_config,
                           env_config=env_config, scorer_config=scorer_config,
                           weights=weights)
            run_dir = None
            if out_dir is not None:
                run_dir = out_dir / f"{variant}-s{seed}"
            result = train(env, ppo_config, seed=seed, out_dir=run_dir)
            train_time = time.perf_counter() - t0
            if progress:
                print(f"[ablate] trained {variant} seed {seed} "
                      f"({ppo_config.total_timesteps} steps, {train_time:.0f}s)")
            for task in tasks:
                eval_env = make_env(variant, task, world_config=world_config,
                                    env_config=env_config,
                                    scorer_config=scorer_config, weights=weights)
                per_spawn = []
                for spawn_idx in range(eval_spawns):
                    metrics, _ = run_episode(eval_env, result.policy,
                                             seed=episode_seed(1_000_000 + seed, spawn_idx))
                    per_spawn.append(metrics)
                rows.append(_aggregate_row(variant, task, seed, per_spawn))
                if progress:
                    print(f"[ablate]   task {task}: "
                          f"pct_fov {rows[-1]['pct_fov']:.1f} "
                          f"ttd {rows[-1]['ttd_steps']}")
    return rows


def _aggregate_row(variant: str, task: int, seed: int,
                   metrics: list[EpisodeMetrics]) -> dict:
    ttd_steps = [m.ttd_steps for m in metrics if m.ttd_steps is not None]
    ttd_secs = [m.ttd_seconds for m in metrics if m.ttd_seconds is not None]
    return {
        "variant": variant,
        "task": task,
        "seed": seed,
        "total_reward": float(np.mean([m.total_reward for m in metrics])),
        "pct_fov": float(np.mean([m.pct_fov for m in metrics])),
        "ttd_seconds": float(np.mean(ttd_secs)) if ttd_secs else None,
        "ttd_steps": float(np.mean(ttd_steps)) if ttd_steps else None,
        "distance_m": float(np.mean([m.distance_m for m in metrics])),
        "runtime_s": float(np.mean([m.runtime_s for m in metrics])),
    }


def write_results_csv(rows: list[dict], path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                             for k in RESULT_FIELDS})


def read_results_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = dict(rec)
            row["task"] = int(row["task"])
            row["seed"] = int(row["seed"])
            for key in ("total_reward", "pct_fov", "ttd_seconds", "ttd_steps",
                        "distance_m", "runtime_s"):
                row[key] = float(row[key]) if row[key] != "" else None
            rows.append(row)
    return rows


def format_table(rows: list[dict], budget: int | None = None) -> str:
    """Mean +- std summary per (variant, task), mirroring the result tables."""
    lines = []
    if budget is not None and budget < FULL_BUDGET:
        lines.append(f"*** REDUCED BUDGET: {budget} steps per variant "
                     f"(full protocol is {FULL_BUDGET}) ***")
    header = (f"{'variant':<18} {'task':>4} {'R_total':>14} {'%FOV':>13} "
              f"{'TTD(s)':>15} {'TTD(steps)':>15} {'Dist(m)':>14}")
    lines.append(header)
    lines.append("-" * len(header))
    tasks = sorted({r["task"] for r in rows})
    variants = [v for v in VARIANTS if any(r["variant"] == v for r in rows)]
    for task in tasks:
        for variant in variants:
            sel = [r for r in rows if r["task"] == task and r["variant"] == variant]
            if not sel:
                continue
            lines.append(
                f"{variant:<18} {task:>4} "
                f"{_mean_std(sel, 'total_reward'):>14} "
                f"{_mean_std(sel, 'pct_fov'):>13} "
                f"{_mean_std(sel, 'ttd_seconds'):>15} "
                f"{_mean_std(sel, 'ttd_steps'):>15} "
                f"{_mean_std(sel, 'distance_m'):>14}")
    return "\n".join(lines)


def _mean_std(rows: list[dict], key: str) -> str:
    vals = [r[key] for r in rows if r[key] is not None]
    if not vals:
        return "--"
    if len(vals) == 1:
        return f"{vals[0]:.2f}"
    return f"{np.mean(vals):.2f}+-{np.std(vals):.2f}"


def emit_reward_curve(rewards, window: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Raw series and its centered moving average (edge-truncated window)."""
    rewards = np.asarray(rewards, dtype=float)
    if len(rewards) < window:
        raise ValueError(f"log length {len(rewards)} shorter than window {window}")
    lo = (window - 1) // 2
    hi = window // 2
    avg = np.empty_like(rewards)
    for i in range(len(rewards)):
        avg[i] = rewards[max(0, i - lo):min(len(rewards), i + hi + 1)].mean()
    return rewards, avg


def magnitude_stats(rows: list[dict]) -> dict:
    """Mean absolute magnitude per reward component, for shaping-scale tuning."""
    keys = rows[0]["components"].keys()
    return {key: float(np.mean([abs(r["components"][key]) for r in rows]))
            for key in keys}
