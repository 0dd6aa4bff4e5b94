"""Training, synthesis and experiment orchestration."""

from .config import ExperimentConfig, TrainConfig
from .synthesis import (
    SyntheticBatch,
    SyntheticItem,
    class_totals,
    generate_images,
    synthesize_strategy_I,
    synthesize_strategy_II,
)
from .training import (
    DivergenceError,
    GanTrainResult,
    SegTrainResult,
    build_gan,
    moving_average,
    stack_batch,
    train_redgan,
    train_segmentor,
)

__all__ = [
    "DivergenceError",
    "ExperimentConfig",
    "GanTrainResult",
    "SegTrainResult",
    "SyntheticBatch",
    "SyntheticItem",
    "TrainConfig",
    "build_gan",
    "class_totals",
    "generate_images",
    "moving_average",
    "stack_batch",
    "synthesize_strategy_I",
    "synthesize_strategy_II",
    "train_redgan",
    "train_segmentor",
]
