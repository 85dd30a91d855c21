"""Visual question localized-answering: synthetic data, fusion model, harnesses."""

from .config import TrainConfig, load_config, save_config
from .data import (
    ANSWER_NAMES,
    NUM_CLASSES,
    BoundingBox,
    VQLASample,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .fusion import FUSION_STRATEGIES
from .losses import MetricsReport
from .model import ModelConfig, VQLAModel, load_checkpoint, save_checkpoint
from .training import (
    RunReport,
    evaluate,
    run_depth_ablation,
    run_fusion_ablation,
    run_robustness,
    train,
)

__all__ = [
    "ANSWER_NAMES",
    "NUM_CLASSES",
    "BoundingBox",
    "FUSION_STRATEGIES",
    "MetricsReport",
    "ModelConfig",
    "RunReport",
    "TrainConfig",
    "VQLAModel",
    "VQLASample",
    "evaluate",
    "generate_dataset",
    "load_checkpoint",
    "load_config",
    "read_dataset",
    "run_depth_ablation",
    "run_fusion_ablation",
    "run_robustness",
    "save_checkpoint",
    "save_config",
    "train",
    "write_dataset",
]
