"""Reward terms: movement, energy, altitude, collision, semantic potential
shaping, and the quadrant directional bonus."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .semantic import DirectionalDistribution, SemanticScore
from .uav import ACTION_DIRECTION_LABELS, UavState


@dataclass
class RewardWeights:
    w_m: float = 0.1
    w_e: float = -0.001
    w_z: float = -0.0005
    r_collision: float = -100.0
    scale: float = 1.0          # shaping magnitude (potential range is +-scale/2)
    beta_dir: float = 0.05
    gamma: float = 0.99         # shaping discount = PPO discount
    altitude_limit: float = 400.0  # m AGL above which the altitude penalty applies

    def validate(self):
        if self.w_m <= 0 or self.w_e >= 0 or self.w_z >= 0:
            raise ValueError("expected w_m > 0, w_e < 0, w_z < 0")
        if self.r_collision >= 0:
            raise ValueError("r_collision must be negative")
        if self.beta_dir <= 0:
            raise ValueError("beta_dir must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        return self


@dataclass
class ShapingState:
    phi_prev: float = 0.0
    r_vlm_prev: float = 0.0
    p_prev: DirectionalDistribution | None = None
    detected: bool = False


def movement_reward(state: UavState, v_max: float, dt: float) -> float:
    """Normalized displacement plus a bonus for setting a new max distance
    from the spawn point. Bounded in [0, 2]."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    disp = float(np.linalg.norm(state.pos - state.pos_prev))
    ratio = min(1.0, disp / (v_max * dt))
    record = float(np.linalg.norm(state.pos - state.spawn_pos)) > state.max_spawn_dist
    return ratio + (1.0 if record else 0.0)


def energy_penalty(e_t: float, detected: bool) -> float:
    """Energy spend counts only until wildfire has been detected."""
    if e_t < 0:
        raise ValueError("energy must be >= 0")
    return 0.0 if detected else e_t


def altitude_penalty(z_agl: float, limit: float = 400.0) -> float:
    """Altitude itself is the penalty once strictly above the limit."""
    if z_agl < 0:
        raise ValueError("AGL must be >= 0")
    return z_agl if z_agl > limit else 0.0


def vlm_potential(s: float, scale: float) -> float:
    """Centered potential: scale * ((s + 1)/2 - 0.5)."""
    if not -1.0 <= s <= 1.0:
        raise ValueError(f"semantic score {s} outside [-1, 1]")
    return scale * ((s + 1.0) / 2.0 - 0.5)


def vlm_shaping(phi_t: float, phi_prev: float, gamma: float) -> float:
    """Potential-based shaping reward gamma * phi_t - phi_prev."""
    return gamma * phi_t - phi_prev


def directional_bonus(action: int, dist: DirectionalDistribution,
                      beta_dir: float) -> float:
    """beta * P(d*) when the action's horizontal direction matches d*."""
    label = ACTION_DIRECTION_LABELS.get(action)
    if label is None or label != dist.d_star:
        return 0.0
    return beta_dir * dist.p[dist.d_star]


@dataclass
class RewardComponents:
    """Raw per-step reward inputs (pre-weighting)."""
    r_m: float = 0.0
    r_e: float = 0.0
    r_z: float = 0.0
    collided: bool = False
    r_vlm: float = 0.0
    r_dir: float = 0.0


def total_reward(components: RewardComponents, weights: RewardWeights) -> tuple[float, dict]:
    """Weighted total and its exact additive breakdown.

    The returned total is the plain sum of the breakdown values, so logging
    the breakdown always reconstructs the reward bit-for-bit.
    """
    breakdown = {
        "movement": weights.w_m * components.r_m,
        "energy": weights.w_e * components.r_e,
        "altitude": weights.w_z * components.r_z,
        "collision": weights.r_collision if components.collided else 0.0,
        "vlm": components.r_vlm,
        "directional": components.r_dir,
    }
    total = (breakdown["movement"] + breakdown["energy"] + breakdown["altitude"]
             + breakdown["collision"] + breakdown["vlm"] + breakdown["directional"])
    return total, breakdown


class ShapingEngine:
    """Per-episode semantic shaping state machine.

    Follows the reference update order: on query steps the potential advances
    and a fresh shaping reward is computed; on skipped steps the previous
    shaping reward and directional distribution are reused verbatim. The
    "hold_potential" mode instead holds phi and re-derives the shaping term
    each step, preserving the telescoping property across skips.
    """

    def __init__(self, weights: RewardWeights, skip_mode: str = "reuse_reward"):
        if skip_mode not in ("reuse_reward", "hold_potential"):
            raise ValueError(f"unknown skip mode {skip_mode!r}")
        self.weights = weights
        self.skip_mode = skip_mode
        self.state = ShapingState()

    def reset(self):
        self.state = ShapingState()

    def update_potential(self, is_query_step: bool, s_t: float | None) -> float:
        """Advance phi and return this step's shaping reward R_VLM."""
        st = self.state
        w = self.weights
        if is_query_step and s_t is not None:
            phi_t = vlm_potential(s_t, w.scale)
            r = vlm_shaping(phi_t, st.phi_prev, w.gamma)
            st.phi_prev = phi_t
            st.r_vlm_prev = r
            return r
        if self.skip_mode == "reuse_reward":
            return st.r_vlm_prev
        return vlm_shaping(st.phi_prev, st.phi_prev, w.gamma)

    def update_distribution(self, is_query_step: bool,
                            dist: DirectionalDistribution | None):
        if is_query_step and dist is not None:
            self.state.p_prev = dist

    def bonus(self, action: int) -> float:
        if self.state.p_prev is None:
            return 0.0
        return directional_bonus(action, self.state.p_prev, self.weights.beta_dir)
