from .loop import (Checkpoint, TrainConfig, TrainingAborted, TrainResult, checkpoint_steps, prepare_sample,
                   select_best, train, train_step, write_history)
from .loss import LossWeights, NumericalError, bce_with_logits, composite_loss, cross_entropy, soft_dice_loss
from .optim import Adam, cosine_lr

__all__ = [
    "Adam", "Checkpoint", "LossWeights", "NumericalError", "TrainConfig", "TrainResult", "TrainingAborted",
    "bce_with_logits", "checkpoint_steps", "composite_loss", "cosine_lr", "cross_entropy", "prepare_sample",
    "select_best", "soft_dice_loss", "train", "train_step", "write_history",
]
