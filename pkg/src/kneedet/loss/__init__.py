"""Target assignment, the GIoU-based detection loss, Adam and toy training."""
from .backprop import backward, forward_train
from .objective import LossBreakdown, LossWeights, loss_and_grad, yolo_loss, yolo_loss_gradient
from .optim import AdamState, adam_step
from .targets import HeadTargets, TargetAssignment, assign_targets
from .trainer import TrainHyperparams, format_history, train_toy

__all__ = [
    "AdamState",
    "HeadTargets",
    "LossBreakdown",
    "LossWeights",
    "TargetAssignment",
    "TrainHyperparams",
    "adam_step",
    "assign_targets",
    "backward",
    "format_history",
    "forward_train",
    "loss_and_grad",
    "train_toy",
    "yolo_loss",
    "yolo_loss_gradient",
]
