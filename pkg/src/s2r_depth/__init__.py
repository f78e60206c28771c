"""Structure-guided monocular depth with synthetic-to-real generalization, at desk scale."""

from .attention import COMBINE_MODES, DSA, combine
from .checkpoint import Checkpoint, hash_tensors
from .config import TrainConfig, load_config, parse_config, toy_config
from .data import Domain, ImageSample, read_dataset, write_dataset
from .depth_predictor import DepthPredictor
from .errors import (DegenerateBatchError, DepthEncodingError, InvalidConfigError, MissingModuleError,
                     S2RError, ShapeError, StageOrderError, TrainingDivergenceError)
from .evaluation import MetricsReport, compute_metrics, evaluate_dataset
from .losses import LossConfig, depth_l1, stage2_loss, structure_regularizer
from .model import S2RDepthNet, load_model
from .training import (lr_at, train_baseline, train_stage1, train_stage2, train_stage3,
                       train_stage4_semi)
from .translation import STE, TranslationWeights

__version__ = "0.1.0"

__all__ = [
    "COMBINE_MODES", "DSA", "combine", "Checkpoint", "hash_tensors", "TrainConfig", "load_config",
    "parse_config", "toy_config", "Domain", "ImageSample", "read_dataset", "write_dataset",
    "DepthPredictor", "DegenerateBatchError", "DepthEncodingError", "InvalidConfigError",
    "MissingModuleError", "S2RError", "ShapeError", "StageOrderError", "TrainingDivergenceError",
    "MetricsReport", "compute_metrics", "evaluate_dataset", "LossConfig", "depth_l1", "stage2_loss",
    "structure_regularizer", "S2RDepthNet", "load_model", "lr_at", "train_baseline", "train_stage1",
    "train_stage2", "train_stage3", "train_stage4_semi", "STE", "TranslationWeights",
]
