from .config import RBTConfig
from .model import RewardBagTransformer, bidirectional_attention
from .batch import BagBatch, BagTrajectory, make_window_batch, sample_batch
from .losses import composite_loss, reward_loss, state_loss
from .train import (
    RBTTrainer, StepResult, TrainingDivergedError, bag_loss, make_optimizer, relabel, relabel_many,
    train_step,
)
from . import checkpoint

__all__ = [
    "RBTConfig", "RewardBagTransformer", "bidirectional_attention", "BagBatch", "BagTrajectory",
    "make_window_batch", "sample_batch", "composite_loss", "reward_loss", "state_loss",
    "RBTTrainer", "StepResult", "TrainingDivergedError", "bag_loss", "make_optimizer", "relabel",
    "relabel_many", "train_step", "checkpoint",
]
from .diagnostics import (
    GRADCHECK_CONFIG, bag_residuals, frozen_gridworld_buffer, model_gradcheck, pearson, sum_consistency,
)

__all__ += ["GRADCHECK_CONFIG", "bag_residuals", "frozen_gridworld_buffer", "model_gradcheck", "pearson",
            "sum_consistency"]
