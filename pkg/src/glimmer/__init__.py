"""Glucose forecasting toolkit.

A compact CNN-LSTM forecaster for 60-minute CGM prediction, trained with a
region-weighted MAE whose hypo/hyper weights can be tuned by a genetic
algorithm, plus the full evaluation stack (RMSE/MAE, per-region slices,
event metrics, Clarke Error Grid) and a CLI.
"""

from .data import (
    CgmRecord,
    Thresholds,
    WindowSet,
    build_features,
    chronological_split,
    classify_region,
    generate_synthetic,
    make_windows,
    moving_average,
    parse_csv,
    write_csv,
)
from .errors import (
    CheckpointError,
    DataError,
    FormatError,
    GlimmerError,
    NumericError,
    OrderingError,
    RowError,
    ShapeError,
    SplitError,
)
from .evaluation import (
    EvalReport,
    EvalResult,
    ceg_summary,
    clarke_zone,
    classification_metrics,
    evaluate_model,
    evaluate_predictions,
    mae,
    region_slice_metrics,
    rmse,
)
from .forecaster import GlucoseForecaster
from .losses import (
    LossWeights,
    PlainMae,
    RegionWeightedMae,
    weighted_region_loss,
    weighted_region_loss_grad,
)
from .network import ArchConfig, ModelParams, TrainConfig, train
from .scaling import WindowScaler
from .tuner import GaConfig, Individual, average_weights, run_ga, tune_weights

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "CgmRecord",
    "CheckpointError",
    "DataError",
    "EvalReport",
    "EvalResult",
    "FormatError",
    "GaConfig",
    "GlimmerError",
    "GlucoseForecaster",
    "Individual",
    "LossWeights",
    "ModelParams",
    "NumericError",
    "OrderingError",
    "PlainMae",
    "RegionWeightedMae",
    "RowError",
    "ShapeError",
    "SplitError",
    "Thresholds",
    "TrainConfig",
    "WindowScaler",
    "WindowSet",
    "average_weights",
    "build_features",
    "ceg_summary",
    "chronological_split",
    "clarke_zone",
    "classification_metrics",
    "classify_region",
    "evaluate_model",
    "evaluate_predictions",
    "generate_synthetic",
    "mae",
    "make_windows",
    "moving_average",
    "parse_csv",
    "region_slice_metrics",
    "rmse",
    "run_ga",
    "train",
    "tune_weights",
    "weighted_region_loss",
    "weighted_region_loss_grad",
    "write_csv",
]
