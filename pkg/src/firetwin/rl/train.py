"""Training loop: rollout collection, PPO updates, periodic evaluation, and
best-checkpoint tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .buffer import RolloutBuffer
from .checkpoint import save_checkpoint
from .networks import MultiInputActorCritic
from .ppo import PpoConfig, ppo_update, sample_action

CURVE_HEADER = "step,mean_return,policy_loss,value_loss,entropy"


def episode_seed(seed: int, episode: int) -> int:
    """Deterministic per-episode seed stream."""
    return int(np.random.SeedSequence((seed, episode)).generate_state(1)[0])


@dataclass
class TrainResult:
    policy: MultiInputActorCritic
    curve_rows: list
    episode_returns: list
    n_updates: int
    n_evals: int
    best_eval_return: float | None
    best_path: Path | None
    final_path: Path | None
    curve_path: Path | None


def greedy_action(logits: np.ndarray) -> int:
    return int(np.argmax(logits))


def evaluate_policy(policy, env, episodes: int, seed_base: int,
                    deterministic: bool = True,
                    rng: np.random.Generator | None = None) -> tuple[float, list]:
    """Mean return of the policy over seeded evaluation episodes."""
    rng = rng if rng is not None else np.random.default_rng(0)
    returns = []
    for ep in range(episodes):
        obs = env.reset(seed=episode_seed(seed_base, ep))
        total = 0.0
        done = False
        while not done:
            logits, _ = policy.act_values(obs)
            action = greedy_action(logits) if deterministic else sample_action(logits, rng)[0]
            result = env.step(action)
            total += result.reward
            done = result.done
            obs = result.observation
        returns.append(total)
    return float(np.mean(returns)), returns


def write_curve_csv(rows: list, path):
    lines = [CURVE_HEADER]
    for row in rows:
        lines.append(",".join(repr(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def train(env, config: PpoConfig, seed: int, out_dir=None, eval_env=None,
          progress: bool = False) -> TrainResult:
    """Run PPO for config.total_timesteps environment steps.

    Evaluation (when eval_env is given) fires every eval_freq steps and keeps
    the checkpoint with the best mean evaluation return. Fully deterministic
    for a fixed (env, config, seed) with the synthetic scorer.
    """
    config.validate()
    torch.set_num_threads(config.torch_threads)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    episode_idx = 0
    obs = env.reset(seed=episode_seed(seed, episode_idx))
    policy = MultiInputActorCritic(
        image_hw=obs.image_top.shape[0],
        conv_channels=tuple(config.conv_channels),
        image_feat=config.image_feat,
        scalar_dim=len(obs.scalars),
        scalar_hidden=config.scalar_hidden,
        trunk_hidden=config.trunk_hidden,
    )
    optimizer = torch.optim.Adam(policy.parameters(), lr=config.learning_rate)
    buffer = RolloutBuffer(config.n_steps, obs.image_top.shape[0], len(obs.scalars))

    curve_rows = []
    episode_returns: list[float] = []
    ep_return = 0.0
    steps_done = 0
    n_updates = 0
    n_evals = 0
    next_eval = config.eval_freq
    best_eval = None
    best_path = out_dir / "best.fvlm" if out_dir is not None else None
    last_mean_return = 0.0

    n_iterations = math.ceil(config.total_timesteps / config.n_steps)
    for _ in range(n_iterations):
        to_collect = min(config.n_steps, config.total_timesteps - steps_done)
        completed_this_iter: list[float] = []
        last_done = False
        for _ in range(to_collect):
            logits, value = policy.act_values(obs)
            action, log_prob = sample_action(logits, rng)
            result = env.step(action)
            buffer.add(obs, action, log_prob, value, result.reward, result.done)
            ep_return += result.reward
            steps_done += 1
            last_done = result.done
            if result.done:
                episode_returns.append(ep_return)
                completed_this_iter.append(ep_return)
                ep_return = 0.0
                episode_idx += 1
                obs = env.reset(seed=episode_seed(seed, episode_idx))
            else:
                obs = result.observation

        bootstrap = 0.0 if last_done else policy.act_values(obs)[1]
        stats = ppo_update(policy, optimizer, buffer, config, rng,
                           bootstrap_value=bootstrap)
        buffer.clear()
        n_updates += 1
        if completed_this_iter:
            last_mean_return = float(np.mean(completed_this_iter))
        curve_rows.append((steps_done, last_mean_return, stats["policy_loss"],
                           stats["value_loss"], stats["entropy"]))
        if progress:
            print(f"step {steps_done}: return {last_mean_return:.3f} "
                  f"entropy {stats['entropy']:.3f}")

        while eval_env is not None and steps_done >= next_eval:
            mean_ret, _ = evaluate_policy(policy, eval_env, config.eval_episodes,
                                          seed_base=seed)
            n_evals += 1
            next_eval += config.eval_freq
            if best_eval is None or mean_ret > best_eval:
                best_eval = mean_ret
                if best_path is not None:
                    save_checkpoint(policy, best_path)

    final_path = curve_path = None
    if out_dir is not None:
        final_path = out_dir / "final.fvlm"
        save_checkpoint(policy, final_path)
        curve_path = out_dir / "curve.csv"
        write_curve_csv(curve_rows, curve_path)
        if best_eval is None:
            best_path = None
    else:
        best_path = None

    return TrainResult(policy=policy, curve_rows=curve_rows,
                       episode_returns=episode_returns, n_updates=n_updates,
                       n_evals=n_evals, best_eval_return=best_eval,
                       best_path=best_path, final_path=final_path,
                       curve_path=curve_path)
