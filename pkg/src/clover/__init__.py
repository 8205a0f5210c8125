"""Context-aware robustness fuzzing, suite selection, and retraining for
small dense classifiers."""

from .attack import AttackConfig, build_universe, fgsm, pgd
from .cases import Seed, TestCase, TestPool, TestSuite, make_seeds
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv, split
from .fuzzer import FuzzConfig, context_fuzz
from .metrics import (
    CCParams,
    contextual_confidence,
    fol,
    gini,
    mean_cc_reduction,
    robust_accuracy,
    suite_stats,
)
from .nn import MLP, gradient_check, load_model, save_model, train
from .pipeline import (
    DataConfig,
    PipelineConfig,
    Report,
    RetrainConfig,
    TrainConfig,
    retrain,
    run_experiment_grid,
    run_pipeline,
)
from .select import (
    be_st,
    context_select,
    gini_order_select,
    km_st,
    partition_by_cc,
    random_select,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "CCParams",
    "DataConfig",
    "Dataset",
    "FuzzConfig",
    "MLP",
    "PipelineConfig",
    "Report",
    "RetrainConfig",
    "Seed",
    "SyntheticSpec",
    "TestCase",
    "TestPool",
    "TestSuite",
    "TrainConfig",
    "be_st",
    "build_universe",
    "context_fuzz",
    "context_select",
    "contextual_confidence",
    "fgsm",
    "fol",
    "generate_synthetic",
    "gini",
    "gini_order_select",
    "gradient_check",
    "km_st",
    "load_csv",
    "load_model",
    "make_seeds",
    "mean_cc_reduction",
    "partition_by_cc",
    "pgd",
    "random_select",
    "retrain",
    "robust_accuracy",
    "run_experiment_grid",
    "run_pipeline",
    "save_model",
    "split",
    "suite_stats",
    "train",
]
