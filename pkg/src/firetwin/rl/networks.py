"""Multi-input actor-critic: one small CNN per camera view (separate weights),
a scalar-feature encoder, a fusion trunk, and categorical + value heads."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn


def _init_orthogonal(module: nn.Module, gain: float):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.orthogonal_(m.weight, gain=gain)
            nn.init.zeros_(m.bias)


class MultiInputActorCritic(nn.Module):
    def __init__(self, image_hw: int = 64, conv_channels=(4, 8, 8),
                 image_feat: int = 64, scalar_dim: int = 11,
                 scalar_hidden: int = 32, trunk_hidden: int = 128,
                 n_actions: int = 7):
        super().__init__()
        self.image_hw = image_hw
        self.scalar_dim = scalar_dim
        self.n_actions = n_actions
        self.cnn_top = self._make_cnn(image_hw, conv_channels, image_feat)
        self.cnn_angled = self._make_cnn(image_hw, conv_channels, image_feat)
        self.scalar_enc = nn.Sequential(nn.Linear(scalar_dim, scalar_hidden), nn.ReLU())
        self.trunk = nn.Sequential(
            nn.Linear(2 * image_feat + scalar_hidden, trunk_hidden), nn.ReLU())
        self.action_head = nn.Linear(trunk_hidden, n_actions)
        self.value_head = nn.Linear(trunk_hidden, 1)

        _init_orthogonal(self.cnn_top, gain=np.sqrt(2))
        _init_orthogonal(self.cnn_angled, gain=np.sqrt(2))
        _init_orthogonal(self.scalar_enc, gain=np.sqrt(2))
        _init_orthogonal(self.trunk, gain=np.sqrt(2))
        # zeroed heads: uniform initial policy, zero initial value
        nn.init.zeros_(self.action_head.weight)
        nn.init.zeros_(self.action_head.bias)
        nn.init.zeros_(self.value_head.weight)
        nn.init.zeros_(self.value_head.bias)

    @staticmethod
    def _make_cnn(image_hw: int, channels, feat: int) -> nn.Sequential:
        c0, c1, c2 = channels
        reduced = image_hw // 8  # three stride-2 stages
        return nn.Sequential(
            nn.Conv2d(3, c0, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(c0, c1, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1), nn.ReLU(),
            nn.Flatten(),
            nn.Linear(c2 * reduced * reduced, feat), nn.ReLU(),
        )

    def forward(self, image_top: torch.Tensor, image_angled: torch.Tensor,
                scalars: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z = torch.cat([self.cnn_top(image_top), self.cnn_angled(image_angled),
                       self.scalar_enc(scalars)], dim=1)
        h = self.trunk(z)
        return self.action_head(h), self.value_head(h).squeeze(-1)

    @torch.no_grad()
    def act_values(self, obs) -> tuple[np.ndarray, float]:
        """Logits and value for a single observation (numpy in, numpy out)."""
        top, ang, sca = obs_to_tensors(obs)
        logits, value = self.forward(top, ang, sca)
        return logits[0].double().numpy(), float(value[0])


def images_to_tensor(images: np.ndarray) -> torch.Tensor:
    """uint8 (N, H, W, 3) -> float32 (N, 3, H, W) scaled to [0, 1]."""
    arr = torch.from_numpy(np.ascontiguousarray(images))
    return arr.permute(0, 3, 1, 2).float() / 255.0


def obs_to_tensors(obs):
    """Batch-of-one tensors from any object with image_top/image_angled/scalars."""
    top = images_to_tensor(obs.image_top[None])
    ang = images_to_tensor(obs.image_angled[None])
    sca = torch.from_numpy(np.asarray(obs.scalars, dtype=np.float32)[None])
    return top, ang, sca
