"""Single run configuration: one JSON document covering every subsystem."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .env import EnvConfig
from .reward import RewardWeights
from .rl import PpoConfig
from .semantic import ScorerConfig
from .uav import EnergyModelParams, UavConfig
from .world import WindField, WorldConfig


def _from_dict(cls, doc: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**doc)


@dataclass
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    wind: WindField = field(default_factory=WindField)
    uav: UavConfig = field(default_factory=UavConfig)
    energy: EnergyModelParams = field(default_factory=EnergyModelParams)
    reward: RewardWeights = field(default_factory=RewardWeights)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    task: int = 2
    variant: str = "vlm_final"
    seed: int = 0
    out_dir: str = "runs"
    skip_mode: str = "reuse_reward"

    def validate(self) -> "RunConfig":
        self.world.validate()
        self.wind.validate()
        self.uav.validate()
        self.energy.validate()
        self.reward.validate()
        self.scorer.validate()
        self.ppo.validate()
        self.env.validate()
        if self.task not in (1, 2, 3, 4, 5):
            raise ValueError(f"task must be 1..5, got {self.task}")
        return self

    def to_dict(self) -> dict:
        doc = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                value = dataclasses.asdict(value)
            doc[f.name] = value
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        sections = {
            "world": WorldConfig, "wind": WindField, "uav": UavConfig,
            "energy": EnergyModelParams, "reward": RewardWeights,
            "scorer": ScorerConfig, "ppo": PpoConfig, "env": EnvConfig,
        }
        kwargs = {}
        for name, sec_cls in sections.items():
            if name in doc:
                sub = doc.pop(name)
                if name == "wind" and "base_vector" in sub:
                    sub = dict(sub)
                    sub["base_vector"] = tuple(sub["base_vector"])
                if name == "ppo" and "conv_channels" in sub:
                    sub = dict(sub)
                    sub["conv_channels"] = tuple(sub["conv_channels"])
                kwargs[name] = _from_dict(sec_cls, sub)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown RunConfig fields: {sorted(unknown)}")
        kwargs.update(doc)
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(self.to_json())

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def training_plan(ppo: PpoConfig) -> dict:
    """Episode/update/eval counts implied by the budget arithmetic."""
    return {
        "n_episodes": ppo.total_timesteps // ppo.max_steps_per_episode,
        "n_updates": math.ceil(ppo.total_timesteps / ppo.n_steps),
        "n_evals": ppo.total_timesteps // ppo.eval_freq,
    }


def write_manifest(path, config: RunConfig, scenario_hash: str = "",
                   extra: dict | None = None):
    """Reproduction manifest: config hash + seed + scenario content hash."""
    doc = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "scenario_hash": scenario_hash,
        "task": config.task,
        "variant": config.variant,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
