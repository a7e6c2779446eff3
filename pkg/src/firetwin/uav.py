"""UAV kinematics in NED coordinates, motion primitives, collision, energy model.

NED: x north, y east, z down (so "up" commands are negative z). Positions are
meters in the world frame whose origin is the grid's south-west corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .world import TerrainGrid

# action index -> (name, axis, sign); axis None marks hover
ACTION_TABLE = (
    ("forward", 0, +1),
    ("right", 1, +1),
    ("down", 2, +1),
    ("backward", 0, -1),
    ("left", 1, -1),
    ("up", 2, -1),
    ("hover", None, 0),
)
N_ACTIONS = len(ACTION_TABLE)
ACTION_NAMES = tuple(name for name, _, _ in ACTION_TABLE)

# action index -> top-down quadrant label, for the directional bonus
ACTION_DIRECTION_LABELS = {0: "f", 1: "r", 3: "b", 4: "l"}

# quadrant label -> unit horizontal heading (north, east), for the angled camera
DIRECTION_HEADINGS = {
    "f": (1.0, 0.0), "r": (0.0, 1.0), "b": (-1.0, 0.0), "l": (0.0, -1.0),
}


class UavError(ValueError):
    pass


@dataclass
class UavConfig:
    v_x: float = 5.0          # m/s command magnitudes per axis
    v_y: float = 5.0
    v_z: float = 5.0
    k_track: float = 2.0      # 1/s velocity tracking gain
    c_wind: float = 0.5       # wind drift coupling in [0, 1]
    safety_margin: float = 2.0  # m AGL below which flight counts as a collision

    def validate(self):
        if min(self.v_x, self.v_y, self.v_z) <= 0:
            raise UavError("command speeds must be > 0")
        if self.k_track <= 0:
            raise UavError("k_track must be > 0")
        if not 0.0 <= self.c_wind <= 1.0:
            raise UavError("c_wind must be in [0, 1]")
        return self

    @property
    def v_max(self) -> float:
        return max(self.v_x, self.v_y, self.v_z)


@dataclass
class EnergyModelParams:
    mass: float = 1.5        # kg
    gravity: float = 9.81    # m/s^2
    rho: float = 1.225       # kg/m^3 air density
    c_d: float = 0.5         # drag coefficient
    area: float = 0.1        # m^2 reference area
    beta_hover: float = 1.0
    beta_normal: float = 1.2
    beta_aggressive: float = 1.6

    def validate(self):
        for name in ("mass", "gravity", "rho", "c_d", "area",
                     "beta_hover", "beta_normal", "beta_aggressive"):
            if getattr(self, name) <= 0:
                raise UavError(f"{name} must be > 0")
        if not self.beta_hover <= self.beta_normal <= self.beta_aggressive:
            raise UavError("flight-mode multipliers must be ordered hover <= normal <= aggressive")
        return self

    def beta(self, mode: str) -> float:
        try:
            return {"hover": self.beta_hover, "normal": self.beta_normal,
                    "aggressive": self.beta_aggressive}[mode]
        except KeyError:
            raise UavError(f"unknown flight mode {mode!r}") from None


@dataclass
class UavState:
    pos: np.ndarray                       # m NED
    pos_prev: np.ndarray
    vel: np.ndarray                       # m/s NED
    collided: bool = False
    t: int = 0
    spawn_pos: np.ndarray = None
    max_spawn_dist: float = 0.0

    @classmethod
    def at(cls, pos) -> "UavState":
        pos = np.asarray(pos, dtype=float)
        return cls(pos=pos.copy(), pos_prev=pos.copy(), vel=np.zeros(3),
                   spawn_pos=pos.copy())

    @property
    def altitude(self) -> float:
        """Height above the z = 0 datum (NED z is down-positive)."""
        return -float(self.pos[2])

    def agl(self, terrain: TerrainGrid) -> float:
        return self.altitude - terrain.height_at(self.pos[0], self.pos[1])


def action_to_velocity(action: int, speeds: tuple[float, float, float]) -> np.ndarray:
    """Fixed-magnitude NED velocity command for a discrete action index."""
    if not 0 <= action < N_ACTIONS:
        raise UavError(f"action index {action} outside 0..{N_ACTIONS - 1}")
    _, axis, sign = ACTION_TABLE[action]
    cmd = np.zeros(3)
    if axis is not None:
        cmd[axis] = sign * speeds[axis]
    return cmd


def action_axis(action: int) -> int | None:
    if not 0 <= action < N_ACTIONS:
        raise UavError(f"action index {action} outside 0..{N_ACTIONS - 1}")
    return ACTION_TABLE[action][1]


def flight_mode(action: int, prev_axis: int | None) -> str:
    """Classify the beta mode: hover for zero command, aggressive on an axis
    change relative to the previous commanded axis, normal otherwise."""
    axis = action_axis(action)
    if axis is None:
        return "hover"
    if prev_axis is not None and axis != prev_axis:
        return "aggressive"
    return "normal"


def step_dynamics(state: UavState, command: np.ndarray, wind_ned: np.ndarray,
                  dt: float, config: UavConfig) -> UavState:
    """First-order velocity tracking toward command plus wind drift.

    Uses the exact exponential discretization of v' = k (target - v), so the
    update is stable for any k_track * dt and reduces to perfect tracking in
    the large-gain limit.
    """
    if dt <= 0:
        raise UavError("dt must be > 0")
    if state.collided:
        raise UavError("cannot step a collided UAV state")
    target = np.asarray(command, dtype=float) + config.c_wind * np.asarray(wind_ned, dtype=float)
    alpha = 1.0 - math.exp(-config.k_track * dt)
    vel = state.vel + alpha * (target - state.vel)
    pos = state.pos + vel * dt
    # max_spawn_dist covers positions up to pos_prev, so the movement reward can
    # test whether pos_t sets a new record
    prev_dist = float(np.linalg.norm(state.pos - state.spawn_pos))
    return UavState(
        pos=pos,
        pos_prev=state.pos.copy(),
        vel=vel,
        collided=False,
        t=state.t + 1,
        spawn_pos=state.spawn_pos,
        max_spawn_dist=max(state.max_spawn_dist, prev_dist),
    )


def check_collision(state: UavState, terrain: TerrainGrid,
                    config: UavConfig) -> bool:
    """True when below the safety margin AGL or horizontally outside the grid."""
    north, east = state.pos[0], state.pos[1]
    if not (0.0 <= north <= terrain.extent_north and 0.0 <= east <= terrain.extent_east):
        return True
    return state.agl(terrain) < config.safety_margin


def step_energy(state: UavState, params: EnergyModelParams, mode: str,
                dt: float) -> float:
    """Per-step energy: (m g |z_dot| + 0.5 rho v^3 C_d A) dt beta(mode)."""
    if dt <= 0:
        raise UavError("dt must be > 0")
    v = float(np.linalg.norm(state.vel))
    z_dot = abs(float(state.vel[2]))
    power = params.mass * params.gravity * z_dot + 0.5 * params.rho * v ** 3 * params.c_d * params.area
    return power * dt * params.beta(mode)
