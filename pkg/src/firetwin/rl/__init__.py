from .buffer import RolloutBuffer, compute_gae
from .checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint
from .networks import MultiInputActorCritic, obs_to_tensors
from .ppo import PpoConfig, ppo_loss, ppo_update, sample_action
from .train import TrainResult, evaluate_policy, train

__all__ = [
    "RolloutBuffer", "compute_gae",
    "CheckpointError", "load_checkpoint", "load_into", "save_checkpoint",
    "MultiInputActorCritic", "obs_to_tensors",
    "PpoConfig", "ppo_loss", "ppo_update", "sample_action",
    "TrainResult", "evaluate_policy", "train",
]
