from .exact import ExactFB, FixedPoint, exact_fixed_point
from .features import RandomFourierFeatures
from .losses import entropy_critic_loss, fb_loss, ortho_loss
from .model import FbModel, load_checkpoint, save_checkpoint
from .policy import SoftPolicyFamily, soft_policy
from .train import TrainConfig, TrainLog, train

__all__ = [
    "ExactFB", "FixedPoint", "exact_fixed_point", "RandomFourierFeatures",
    "entropy_critic_loss", "fb_loss", "ortho_loss", "FbModel", "load_checkpoint",
    "save_checkpoint", "SoftPolicyFamily", "soft_policy", "TrainConfig", "TrainLog", "train",
]
