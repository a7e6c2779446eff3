"""Episode POMDP: steps world + UAV + rewards per control tick, assembles
dual-view observations, and constructs the five monitoring task scenarios."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .reward import (RewardComponents, RewardWeights, ShapingEngine,
                     altitude_penalty, energy_penalty, movement_reward,
                     total_reward)
from .semantic import CachedScorer, ScorerConfig, make_scorer
from .sensor import (CameraIntrinsics, apply_lowlight, fire_pixel_count,
                     partition_quadrants, render_angled, render_topdown,
                     smoke_pixel_count)
from .uav import (ACTION_DIRECTION_LABELS, DIRECTION_HEADINGS, EnergyModelParams,
                  UavConfig, UavState, action_axis, action_to_velocity,
                  check_collision, flight_mode, step_dynamics, step_energy)
from .world import WindField, World, WorldConfig, ignite_disk


class TaskError(RuntimeError):
    """Task geometry cannot be realized on this grid."""


@dataclass
class EnvConfig:
    image_hw: int = 64
    fov_top: float = 60.0
    fov_angled: float = 100.0
    pitch_angled: float = -45.0
    spawn_agl: float = 100.0
    spawn_margin_frac: float = 0.3   # spawn lands in the central box
    max_steps: int = 4000
    detection_frac: float = 0.005    # of image pixels
    world_substeps: int = 1
    warmup_steps: int = 100          # world pre-burn so plumes exist
    fire_radius_cells: int = 2
    near_distance: float = 100.0     # tasks 2, 4, 5
    far_distance: float = 1000.0     # task 3 target
    far_scale_frac: float = 0.6      # of world half-extent when 1 km won't fit
    crosswind_speed: float = 5.0     # task 4
    lowlight_factor: float = 0.25    # task 5

    def validate(self):
        if self.image_hw < 8:
            raise ValueError("image_hw must be >= 8")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0 < self.detection_frac < 1:
            raise ValueError("detection_frac must be in (0, 1)")
        if self.world_substeps < 1:
            raise ValueError("world_substeps must be >= 1")
        return self

    def detection_threshold(self) -> int:
        return max(1, math.ceil(self.detection_frac * self.image_hw * self.image_hw))


@dataclass
class VariantFlags:
    """Which reward subsystems are active (the ablation axes)."""
    motion_terms: bool = True        # movement / energy / altitude terms
    potential_angled: bool = True    # shaping potential from the angled view
    potential_topdown: bool = False  # fold whole nadir score into the potential
    directional: bool = True         # quadrant bonus from the nadir view


@dataclass
class Observation:
    image_top: np.ndarray
    image_angled: np.ndarray
    scalars: np.ndarray


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict


@dataclass
class TaskSetup:
    world: World
    spawn_pos: np.ndarray       # NED
    fire_cell: tuple[int, int] | None
    fire_distance: float        # actual horizontal meters, 0 for task 1
    fire_bearing: float         # radians from north
    lighting_factor: float
    wind_override: WindField | None


def _spawn_position(rng, world: World, agl: float, margin_frac: float) -> np.ndarray:
    ext_n = world.terrain.extent_north
    ext_e = world.terrain.extent_east
    north = (margin_frac + rng.random() * (1 - 2 * margin_frac)) * ext_n
    east = (margin_frac + rng.random() * (1 - 2 * margin_frac)) * ext_e
    ground = world.terrain.height_at(north, east)
    return np.array([north, east, -(ground + agl)])


def make_task(task_id: int, world_config: WorldConfig, seed: int,
              env_config: EnvConfig | None = None) -> TaskSetup:
    """Build the world, spawn point, and overrides for one of the five tasks.

    1: fire inside the initial nadir footprint. 2: fire ~100 m out, outside
    the footprint. 3: fire far away (1 km, scaled down on small grids) with
    only the plume as a cue. 4: task-2 geometry plus a 5 m/s crosswind.
    5: task-2 geometry under low light. The fire is pre-burned so smoke exists.
    """
    env_config = (env_config or EnvConfig()).validate()
    if task_id not in (1, 2, 3, 4, 5):
        raise TaskError(f"task_id must be 1..5, got {task_id}")
    rng = np.random.default_rng(seed)
    world = World.from_config(world_config)
    spawn = _spawn_position(rng, world, env_config.spawn_agl,
                            env_config.spawn_margin_frac)

    if task_id == 1:
        distance = 0.0
    elif task_id == 3:
        half_extent = 0.5 * min(world.terrain.extent_north, world.terrain.extent_east)
        distance = min(env_config.far_distance,
                       env_config.far_scale_frac * half_extent)
    else:
        distance = env_config.near_distance

    cell = world.config.cell_size
    pad = (env_config.fire_radius_cells + 2) * cell
    bearing = None
    fire_n = fire_e = None
    for _ in range(64):
        candidate = rng.random() * 2.0 * math.pi
        n = spawn[0] + distance * math.cos(candidate)
        e = spawn[1] + distance * math.sin(candidate)
        if (pad <= n <= world.terrain.extent_north - pad
                and pad <= e <= world.terrain.extent_east - pad):
            bearing, fire_n, fire_e = candidate, n, e
            break
    if bearing is None:
        raise TaskError(
            f"cannot place a fire {distance:.0f} m from spawn on a "
            f"{world.terrain.extent_north:.0f} m grid")

    fire_cell = (int(fire_n // cell), int(fire_e // cell))
    if ignite_disk(world, fire_cell, env_config.fire_radius_cells) == 0:
        raise TaskError(f"no fuel at task ignition cell {fire_cell}")
    for _ in range(env_config.warmup_steps):
        world.step()

    wind_override = None
    if task_id == 4:
        # crosswind: perpendicular to the spawn->fire bearing
        sign = 1.0 if rng.random() < 0.5 else -1.0
        perp = bearing + sign * math.pi / 2.0
        wind_override = WindField(
            base_vector=(env_config.crosswind_speed * math.sin(perp),
                         env_config.crosswind_speed * math.cos(perp)),
            gust_amplitude=0.0)
        world.wind = wind_override
    lighting = env_config.lowlight_factor if task_id == 5 else 1.0

    return TaskSetup(world=world, spawn_pos=spawn, fire_cell=fire_cell,
                     fire_distance=distance, fire_bearing=bearing,
                     lighting_factor=lighting, wind_override=wind_override)


def _obs_hash(top: np.ndarray, angled: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(top.tobytes())
    digest.update(angled.tobytes())
    return digest.hexdigest()


class FireUavEnv:
    """Single-agent wildfire monitoring episode loop."""

    def __init__(self, world_config: WorldConfig | None = None,
                 env_config: EnvConfig | None = None,
                 scorer_config: ScorerConfig | None = None,
                 weights: RewardWeights | None = None,
                 flags: VariantFlags | None = None,
                 uav_config: UavConfig | None = None,
                 energy_params: EnergyModelParams | None = None,
                 task_id: int = 2,
                 scorer=None,
                 skip_mode: str = "reuse_reward"):
        self.world_config = world_config or WorldConfig()
        self.env_config = (env_config or EnvConfig()).validate()
        self.scorer_config = (scorer_config or ScorerConfig()).validate()
        self.weights = (weights or RewardWeights()).validate()
        self.flags = flags or VariantFlags()
        self.uav_config = (uav_config or UavConfig()).validate()
        self.energy_params = (energy_params or EnergyModelParams()).validate()
        self.task_id = task_id
        self.skip_mode = skip_mode
        self.scorer = scorer if scorer is not None else make_scorer(self.scorer_config)
        self.detection_threshold = self.env_config.detection_threshold()

        self.world: World | None = None
        self.uav: UavState | None = None
        self.setup: TaskSetup | None = None
        self.done = True
        self.t = 0
        self.log: list[dict] = []

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int = 0) -> Observation:
        self.setup = make_task(self.task_id, replace(self.world_config),
                               seed, self.env_config)
        self.world = self.setup.world
        self.uav = UavState.at(self.setup.spawn_pos)
        self.cached = CachedScorer(self.scorer_config, self.scorer)
        self.shaping = ShapingEngine(self.weights, self.skip_mode)
        self.prev_axis: int | None = None
        self.heading = "f"
        self.t = 0
        self.detected = False
        self.done = False
        self.log = []
        self.episode_seed = seed
        obs = self._observe()
        self._validate_initial(obs)
        return obs

    def _validate_initial(self, obs: Observation):
        count = fire_pixel_count(obs.image_top)
        if self.task_id == 1 and count < self.detection_threshold:
            raise TaskError(
                f"task 1 must start detected: {count} fire pixels "
                f"< threshold {self.detection_threshold}")
        if self.task_id >= 2 and count >= self.detection_threshold:
            raise TaskError(
                f"task {self.task_id} must start undetected: {count} fire "
                f"pixels >= threshold {self.detection_threshold}")
        if self.task_id == 3:
            # the distant plume must be visible when facing the fire
            probe = render_angled(self.world, self.uav,
                                  self._angled_intrinsics(
                                      math.degrees(self.setup.fire_bearing)),
                                  size=self.env_config.image_hw)
            if self.setup.lighting_factor < 1.0:
                probe = apply_lowlight(probe, self.setup.lighting_factor)
            if smoke_pixel_count(probe) == 0:
                raise TaskError("task 3 smoke cue not visible from spawn")

    # -- rendering ---------------------------------------------------------

    def _angled_intrinsics(self, yaw_deg: float) -> CameraIntrinsics:
        return CameraIntrinsics(fov_deg=self.env_config.fov_angled,
                                pitch_deg=self.env_config.pitch_angled,
                                yaw_deg=yaw_deg)

    def _render_views(self) -> tuple[np.ndarray, np.ndarray]:
        hw = self.env_config.image_hw
        top = render_topdown(self.world, self.uav,
                             CameraIntrinsics(fov_deg=self.env_config.fov_top,
                                              pitch_deg=-90.0), size=hw)
        heading_n, heading_e = DIRECTION_HEADINGS[self.heading]
        yaw = math.degrees(math.atan2(heading_e, heading_n))
        angled = render_angled(self.world, self.uav,
                               self._angled_intrinsics(yaw), size=hw)
        factor = self.setup.lighting_factor
        if factor < 1.0:
            top = apply_lowlight(top, factor)
            angled = apply_lowlight(angled, factor)
        return top, angled

    def _scalars(self) -> np.ndarray:
        ext_n = self.world.terrain.extent_north
        ext_e = self.world.terrain.extent_east
        scale = np.array([ext_n, ext_e, 500.0])
        pos = self.uav.pos / scale
        prev = self.uav.pos_prev / scale
        vel = self.uav.vel / self.uav_config.v_max
        return np.concatenate([
            pos, prev, vel,
            [1.0 if self.uav.collided else 0.0],
            [self.t / self.env_config.max_steps],
        ]).astype(np.float32)

    def _observe(self) -> Observation:
        top, angled = self._render_views()
        self._last_views = (top, angled)
        return Observation(image_top=top, image_angled=angled,
                           scalars=self._scalars())

    # -- stepping ----------------------------------------------------------

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        cfg = self.env_config
        dt = self.world.config.dt

        command = action_to_velocity(
            action, (self.uav_config.v_x, self.uav_config.v_y, self.uav_config.v_z))
        label = ACTION_DIRECTION_LABELS.get(action)
        if label is not None:
            self.heading = label
        mode = flight_mode(action, self.prev_axis)
        self.prev_axis = action_axis(action)

        wind_en = self.world.wind.sample(self.world.t)
        wind_ned = np.array([wind_en[1], wind_en[0], 0.0])
        self.uav = step_dynamics(self.uav, command, wind_ned, dt, self.uav_config)
        sub_dt = dt / cfg.world_substeps
        for _ in range(cfg.world_substeps):
            self.world.step(sub_dt)
        if check_collision(self.uav, self.world.terrain, self.uav_config):
            self.uav.collided = True
        self.t += 1

        top, angled = self._render_views()
        self._last_views = (top, angled)
        fire_px = fire_pixel_count(top)
        if fire_px >= self.detection_threshold:
            self.detected = True

        # semantic queries (0-based step counter so the first step is fresh)
        qstep = self.t - 1
        flags = self.flags
        want_angled = flags.potential_angled
        want_top = flags.potential_topdown
        want_patches = flags.directional
        sem = self.cached.query(
            qstep,
            angled=angled if want_angled else None,
            top=top if want_top else None,
            patches=partition_quadrants(top) if want_patches else None)

        s_t = None
        fresh = False
        parts = []
        if want_angled and sem.s_angled is not None:
            parts.append(sem.s_angled.s)
            fresh = fresh or sem.s_angled.step == qstep
        if want_top and sem.s_top is not None:
            parts.append(sem.s_top.s)
            fresh = fresh or sem.s_top.step == qstep
        if parts:
            s_t = float(np.mean(parts))
        r_vlm = self.shaping.update_potential(fresh, s_t) if (want_angled or want_top) else 0.0
        if want_patches:
            self.shaping.update_distribution(sem.dist is not None, sem.dist)
            r_dir = self.shaping.bonus(action)
        else:
            r_dir = 0.0

        e_t = step_energy(self.uav, self.energy_params, mode, dt)
        agl = max(0.0, self.uav.agl(self.world.terrain))
        if flags.motion_terms:
            r_m = movement_reward(self.uav, self.uav_config.v_max, dt)
            r_e = energy_penalty(e_t, self.detected)
            r_z = altitude_penalty(agl, self.weights.altitude_limit)
        else:
            r_m = r_e = r_z = 0.0

        components = RewardComponents(r_m=r_m, r_e=r_e, r_z=r_z,
                                      collided=self.uav.collided,
                                      r_vlm=r_vlm, r_dir=r_dir)
        reward, breakdown = total_reward(components, self.weights)
        self.done = self.uav.collided or self.t >= cfg.max_steps

        obs = Observation(image_top=top, image_angled=angled,
                          scalars=self._scalars())
        info = {
            "t": self.t,
            "components": breakdown,
            "fire_pixels": fire_px,
            "detected": self.detected,
            "s_t": s_t,
            "p_d": dict(self.shaping.state.p_prev.p) if self.shaping.state.p_prev else None,
            "flight_mode": mode,
            "energy": e_t,
            "agl": agl,
            "degraded_steps": self.cached.degraded_steps,
        }
        self.log.append({
            "t": self.t,
            "pos": [float(v) for v in self.uav.pos],
            "action": int(action),
            "reward": reward,
            "components": breakdown,
            "s_t": s_t,
            "p_d": info["p_d"],
            "fire_pixels": fire_px,
            "detected": self.detected,
            "obs_hash": _obs_hash(top, angled),
        })
        return StepResult(observation=obs, reward=reward, done=self.done, info=info)

    def log_meta(self) -> dict:
        return {
            "task_id": self.task_id,
            "seed": self.episode_seed,
            "spawn": [float(v) for v in self.setup.spawn_pos],
            "fire_distance": self.setup.fire_distance,
            "detection_threshold": self.detection_threshold,
            "dt": self.world.config.dt,
        }

    def write_log(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"meta": self.log_meta()}) + "\n")
            for row in self.log:
                fh.write(json.dumps(row) + "\n")


def read_log(path) -> tuple[dict, list[dict]]:
    """Episode log back as (meta, step rows)."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "meta" in doc and "t" not in doc:
                meta = doc["meta"]
            else:
                rows.append(doc)
    return meta, rows


class BeaconEnv:
    """Fire-free variant with reward = -(distance delta) to a fixed beacon.

    Same observation and action spaces as FireUavEnv; used as a learnability
    check for the PPO stack without any fire dynamics.
    """

    def __init__(self, world_config: WorldConfig | None = None,
                 env_config: EnvConfig | None = None,
                 uav_config: UavConfig | None = None):
        self.world_config = world_config or WorldConfig()
        self.env_config = (env_config or EnvConfig()).validate()
        self.uav_config = (uav_config or UavConfig()).validate()
        self.done = True
        self.log: list[dict] = []

    def reset(self, seed: int = 0) -> Observation:
        rng = np.random.default_rng(seed)
        self.world = World.from_config(replace(self.world_config))
        spawn = _spawn_position(rng, self.world, self.env_config.spawn_agl,
                                self.env_config.spawn_margin_frac)
        self.uav = UavState.at(spawn)
        self.beacon = np.array([self.world.terrain.extent_north / 2.0,
                                self.world.terrain.extent_east / 2.0])
        self.heading = "f"
        self.t = 0
        self.done = False
        self.log = []
        return self._observe()

    def _beacon_dist(self, pos: np.ndarray) -> float:
        return float(np.hypot(pos[0] - self.beacon[0], pos[1] - self.beacon[1]))

    def _observe(self) -> Observation:
        hw = self.env_config.image_hw
        top = render_topdown(self.world, self.uav,
                             CameraIntrinsics(fov_deg=self.env_config.fov_top,
                                              pitch_deg=-90.0), size=hw)
        heading_n, heading_e = DIRECTION_HEADINGS[self.heading]
        yaw = math.degrees(math.atan2(heading_e, heading_n))
        angled = render_angled(self.world, self.uav,
                               CameraIntrinsics(fov_deg=self.env_config.fov_angled,
                                                pitch_deg=self.env_config.pitch_angled,
                                                yaw_deg=yaw),
                               size=hw)
        ext_n = self.world.terrain.extent_north
        ext_e = self.world.terrain.extent_east
        scale = np.array([ext_n, ext_e, 500.0])
        scalars = np.concatenate([
            self.uav.pos / scale, self.uav.pos_prev / scale,
            self.uav.vel / self.uav_config.v_max,
            [1.0 if self.uav.collided else 0.0],
            [self.t / self.env_config.max_steps],
        ]).astype(np.float32)
        return Observation(image_top=top, image_angled=angled, scalars=scalars)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        dt = self.world.config.dt
        command = action_to_velocity(
            action, (self.uav_config.v_x, self.uav_config.v_y, self.uav_config.v_z))
        label = ACTION_DIRECTION_LABELS.get(action)
        if label is not None:
            self.heading = label
        wind_en = self.world.wind.sample(self.world.t)
        wind_ned = np.array([wind_en[1], wind_en[0], 0.0])
        self.uav = step_dynamics(self.uav, command, wind_ned, dt, self.uav_config)
        self.world.t += dt
        if check_collision(self.uav, self.world.terrain, self.uav_config):
            self.uav.collided = True
        self.t += 1
        reward = -(self._beacon_dist(self.uav.pos) - self._beacon_dist(self.uav.pos_prev))
        self.done = self.uav.collided or self.t >= self.env_config.max_steps
        return StepResult(observation=self._observe(), reward=reward,
                          done=self.done, info={"t": self.t})
