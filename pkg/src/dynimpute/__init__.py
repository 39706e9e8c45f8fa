"""Imputation strategies for dynamic landmark prediction with missing data.

The package builds stacked landmark datasets from catheter episodes, fills
missing predictor values with one of several strategies that can be applied
to a single new landmark row at prediction time, fits cause-specific Cox
landmark supermodels, and evaluates 7-day risk predictions over repeated
admission-level splits.
"""
from .datamodel import (
    Episode,
    LandmarkRow,
    PredictorSchema,
    Schema,
    StackedDataset,
    apply_lumen_rules,
    merge_catheters_into_episodes,
    stack_landmarks,
    transform_labs,
)
from .harness import ExperimentConfig, run_experiment, split_by_admission, summarize
from .imputers import STRATEGIES, make_imputer
from .landmark import LandmarkSupermodel
from .metrics import evaluate, rubin_pool
from .serialization import load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "Episode",
    "ExperimentConfig",
    "LandmarkRow",
    "LandmarkSupermodel",
    "PredictorSchema",
    "STRATEGIES",
    "Schema",
    "StackedDataset",
    "apply_lumen_rules",
    "evaluate",
    "load_model",
    "make_imputer",
    "merge_catheters_into_episodes",
    "run_experiment",
    "rubin_pool",
    "save_model",
    "split_by_admission",
    "stack_landmarks",
    "summarize",
    "transform_labs",
]
