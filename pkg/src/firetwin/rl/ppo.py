"""Clipped-surrogate PPO update with value and entropy regularization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .buffer import RolloutBuffer
from .networks import images_to_tensor


@dataclass
class PpoConfig:
    learning_rate: float = 3e-4
    n_steps: int = 2000
    batch_size: int = 400
    n_epochs: int = 20
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float = 0.2
    ent_coef: float = 0.01
    vf_coef: float = 0.6
    max_grad_norm: float = 0.5
    max_steps_per_episode: int = 4000
    eval_freq: int = 20000
    total_timesteps: int = 200000
    # network shape
    conv_channels: tuple = (4, 8, 8)
    image_feat: int = 64
    scalar_hidden: int = 32
    trunk_hidden: int = 128
    # runtime
    torch_threads: int = 1
    eval_episodes: int = 3

    def validate(self):
        positive = ("learning_rate", "n_steps", "batch_size", "n_epochs", "gamma",
                    "gae_lambda", "clip_range", "ent_coef", "vf_coef",
                    "max_grad_norm", "max_steps_per_episode", "eval_freq",
                    "total_timesteps")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.clip_range < 1.0:
            raise ValueError("clip_range must be in (0, 1)")
        if self.n_steps % self.batch_size != 0:
            raise ValueError("batch_size must divide n_steps")
        return self


def sample_action(logits: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Sample from softmax(logits); returns (index, log prob of that index)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise ValueError("non-finite action logits")
    z = logits - logits.max()
    probs = np.exp(z)
    probs /= probs.sum()
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u))
    idx = min(idx, len(probs) - 1)
    return idx, float(np.log(probs[idx]))


def ppo_loss(policy, batch: dict, clip_range: float, vf_coef: float,
             ent_coef: float) -> tuple[torch.Tensor, dict]:
    """L_total = L_clip + c_v L_value + c_h L_entropy on one minibatch.

    L_clip = -mean(min(ratio A, clip(ratio) A)), L_value = mean((V - R)^2),
    L_entropy = -mean(entropy). Advantages arrive already normalized.
    """
    logits, values = policy(batch["images_top"], batch["images_angled"],
                            batch["scalars"])
    log_probs_all = torch.log_softmax(logits, dim=-1)
    log_probs = log_probs_all.gather(1, batch["actions"].unsqueeze(1)).squeeze(1)
    ratio = torch.exp(log_probs - batch["old_log_probs"])
    adv = batch["advantages"]
    unclipped = ratio * adv
    clipped = torch.clamp(ratio, 1.0 - clip_range, 1.0 + clip_range) * adv
    l_clip = -torch.minimum(unclipped, clipped).mean()
    l_value = ((values - batch["returns"]) ** 2).mean()
    entropy = -(log_probs_all * torch.exp(log_probs_all)).sum(dim=-1).mean()
    l_entropy = -entropy
    loss = l_clip + vf_coef * l_value + ent_coef * l_entropy
    stats = {
        "policy_loss": float(l_clip),
        "value_loss": float(l_value),
        "entropy": float(entropy),
    }
    return loss, stats


def _minibatch(buffer: RolloutBuffer, idx: np.ndarray, advantages: np.ndarray,
               returns: np.ndarray) -> dict:
    return {
        "images_top": images_to_tensor(buffer.images_top[idx]),
        "images_angled": images_to_tensor(buffer.images_angled[idx]),
        "scalars": torch.from_numpy(buffer.scalars[idx]),
        "actions": torch.from_numpy(buffer.actions[idx]),
        "old_log_probs": torch.from_numpy(buffer.log_probs[idx]).float(),
        "advantages": torch.from_numpy(advantages[idx]).float(),
        "returns": torch.from_numpy(returns[idx]).float(),
    }


def ppo_update(policy, optimizer, buffer: RolloutBuffer, config: PpoConfig,
               rng: np.random.Generator, bootstrap_value: float = 0.0) -> dict:
    """Run n_epochs of shuffled minibatch gradient steps over a full buffer."""
    advantages, returns = buffer.compute_gae(config.gamma, config.gae_lambda,
                                             bootstrap_value)
    # normalized once per update
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    n = buffer.size
    agg: dict[str, float] = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    batches = 0
    for _ in range(config.n_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = _minibatch(buffer, idx, advantages, returns)
            loss, stats = ppo_loss(policy, batch, config.clip_range,
                                   config.vf_coef, config.ent_coef)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite PPO loss (policy={stats['policy_loss']}, "
                    f"value={stats['value_loss']}, entropy={stats['entropy']})")
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(policy.parameters(), config.max_grad_norm)
            optimizer.step()
            for key in agg:
                agg[key] += stats[key]
            batches += 1
    return {key: val / batches for key, val in agg.items()}
