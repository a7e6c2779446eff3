"""Rollout storage and generalized advantage estimation."""

from __future__ import annotations

import numpy as np


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                gamma: float, lam: float,
                bootstrap_value: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Truncated GAE over a rollout that may span several episodes.

    delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t), advantages are the
    (gamma lam)-discounted suffix sums of deltas with no accumulation across
    done boundaries, and returns are advantages + values. The value after the
    final step is ``bootstrap_value`` (use 0 when that step ended an episode).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    t_max = len(rewards)
    if t_max == 0:
        raise ValueError("empty rollout")
    advantages = np.zeros(t_max)
    last_gae = 0.0
    for t in range(t_max - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = bootstrap_value if t == t_max - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last_gae = delta + gamma * lam * nonterminal * last_gae
        advantages[t] = last_gae
    return advantages, advantages + values


class RolloutBuffer:
    """Fixed-capacity on-policy buffer of raw observations and step records."""

    def __init__(self, capacity: int, image_hw: int, scalar_dim: int):
        self.capacity = capacity
        self.images_top = np.zeros((capacity, image_hw, image_hw, 3), dtype=np.uint8)
        self.images_angled = np.zeros_like(self.images_top)
        self.scalars = np.zeros((capacity, scalar_dim), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.log_probs = np.zeros(capacity, dtype=np.float64)
        self.values = np.zeros(capacity, dtype=np.float64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def clear(self):
        self.size = 0

    def add(self, obs, action: int, log_prob: float, value: float,
            reward: float, done: bool):
        if self.full:
            raise RuntimeError("rollout buffer is full")
        i = self.size
        self.images_top[i] = obs.image_top
        self.images_angled[i] = obs.image_angled
        self.scalars[i] = obs.scalars
        self.actions[i] = action
        self.log_probs[i] = log_prob
        self.values[i] = value
        self.rewards[i] = reward
        self.dones[i] = done
        self.size += 1

    def compute_gae(self, gamma: float, lam: float,
                    bootstrap_value: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        n = self.size
        return compute_gae(self.rewards[:n], self.values[:n], self.dones[:n],
                           gamma, lam, bootstrap_value)
