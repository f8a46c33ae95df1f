"""Benchmark harness: datasets, linear learners and experiment protocols."""

from .data import (
    FIXTURES,
    Dataset,
    UnitBoxScaler,
    load_fixture,
    load_libsvm,
    normalize_unit_box,
    project_sphere,
    save_libsvm,
    subsample,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    FeatureMap,
    make_feature_map,
    run_approx_experiment,
    run_task_experiment,
)
from .learners import (
    LinearSVM,
    RidgeRegression,
    accuracy,
    predict_ridge,
    relative_error,
    rmse,
    train_linear_svm,
    train_ridge,
)

__all__ = [
    "FIXTURES",
    "Dataset",
    "UnitBoxScaler",
    "load_fixture",
    "load_libsvm",
    "normalize_unit_box",
    "project_sphere",
    "save_libsvm",
    "subsample",
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureMap",
    "make_feature_map",
    "run_approx_experiment",
    "run_task_experiment",
    "LinearSVM",
    "RidgeRegression",
    "accuracy",
    "predict_ridge",
    "relative_error",
    "rmse",
    "train_linear_svm",
    "train_ridge",
]
