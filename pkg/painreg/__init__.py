# package init for painreg
from ._common import (
    NUM_CLASSES,
    OUTPUT_SCALE,
    ConfigError,
    DataError,
    DatasetParseError,
    DivergenceError,
    DomainError,
    DuplicateKeyError,
    EmptyDatasetError,
    NumericDomainError,
    PainRegError,
    ShapeError,
    UsageError,
)
from .data import (
    Dataset,
    QuantizationMap,
    Sample,
    deduplicate,
    generate_synthetic,
    load_dataset,
    quantize_label,
    save_dataset,
)
from .sampler import BatchSampler, SamplerKind, build_class_index, next_balanced_batch, next_uniform_batch
from .losses import CenterNorm, Centers, LossConfig, RegressionKind, center_loss, joint_loss, smooth_l1_loss
from .model import (
    Mode,
    RegressionHead,
    TrainConfig,
    TrainedModel,
    backward,
    forward,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
from .metrics import Aggregation, evaluate, mae, mse, pcc, weighted_metrics
from .crossval import make_loso_folds, run_loso, write_loso_outputs
from .baselines import all_zeros_predictor, compactness_diagnostic, linear_least_squares_oracle

__all__ = [
    "NUM_CLASSES",
    "OUTPUT_SCALE",
    "PainRegError",
    "DataError",
    "DatasetParseError",
    "DuplicateKeyError",
    "EmptyDatasetError",
    "DomainError",
    "ShapeError",
    "NumericDomainError",
    "ConfigError",
    "UsageError",
    "DivergenceError",
    "Sample",
    "Dataset",
    "QuantizationMap",
    "quantize_label",
    "load_dataset",
    "save_dataset",
    "deduplicate",
    "generate_synthetic",
    "SamplerKind",
    "BatchSampler",
    "build_class_index",
    "next_balanced_batch",
    "next_uniform_batch",
    "RegressionKind",
    "CenterNorm",
    "LossConfig",
    "Centers",
    "smooth_l1_loss",
    "center_loss",
    "joint_loss",
    "Mode",
    "RegressionHead",
    "TrainConfig",
    "TrainedModel",
    "forward",
    "backward",
    "train",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
    "Aggregation",
    "mae",
    "mse",
    "pcc",
    "weighted_metrics",
    "evaluate",
    "make_loso_folds",
    "run_loso",
    "write_loso_outputs",
    "all_zeros_predictor",
    "linear_least_squares_oracle",
    "compactness_diagnostic",
]
