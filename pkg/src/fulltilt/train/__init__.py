from .denoising import DenoisingConfig, build_denoising_queries
from .losses import (
    DenoisingTargets,
    LossConfig,
    TrainingTargets,
    compute_assignments,
    loss_total,
    matched_l1,
    sigmoid_focal_loss,
)
from .matcher import MatchCostConfig, match_hungarian
from .loop import (
    NonFiniteLossError,
    TrainConfig,
    batch_seed_for,
    run_overfit_smoke,
    scene_targets,
    train,
    train_epoch,
    train_step,
)

__all__ = [
    "DenoisingConfig",
    "DenoisingTargets",
    "LossConfig",
    "MatchCostConfig",
    "NonFiniteLossError",
    "TrainConfig",
    "TrainingTargets",
    "batch_seed_for",
    "build_denoising_queries",
    "compute_assignments",
    "loss_total",
    "match_hungarian",
    "matched_l1",
    "run_overfit_smoke",
    "scene_targets",
    "sigmoid_focal_loss",
    "train",
    "train_epoch",
    "train_step",
]
