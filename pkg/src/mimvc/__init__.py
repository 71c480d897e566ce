"""Mask-informed contrastive clustering for incomplete multi-view data."""

from .dataset import (
    MaskSpec,
    MultiViewDataset,
    generate_mask,
    load_dataset,
    make_multiview_blobs,
    save_dataset,
)
from .estimator import MaskedContrastiveClustering, check_views
from .evaluation import MetricsRecord, evaluate, kmeans, score
from .exceptions import ConfigError, DataError, DegenerateProjectionError, MimvcError, TrainingError
from .training import LAMBDA_GRID, VARIANTS, TrainConfig, TrainHistory, run_ablation, run_sweep, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DegenerateProjectionError",
    "LAMBDA_GRID",
    "MaskSpec",
    "MaskedContrastiveClustering",
    "MetricsRecord",
    "MimvcError",
    "MultiViewDataset",
    "TrainConfig",
    "TrainHistory",
    "TrainingError",
    "VARIANTS",
    "check_views",
    "evaluate",
    "generate_mask",
    "kmeans",
    "load_dataset",
    "make_multiview_blobs",
    "run_ablation",
    "run_sweep",
    "save_dataset",
    "score",
    "train",
]
