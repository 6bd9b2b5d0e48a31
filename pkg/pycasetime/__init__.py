"""
pycasetime - Surgical case duration prediction with tree ensembles

This library predicts surgical case durations with regression trees, random
forests and AdaBoost.R2 trained on log-transformed durations, and evaluates
them against historical averaging and expert estimates under an operational
accuracy metric.

Usage:
    from pycasetime import CaseTimeStudy
    from pycasetime.predictors import MethodId

    # Create a study on synthetic data (or CaseTimeStudy.from_csv(path))
    study = CaseTimeStudy.from_synthetic()

    # Pick the methods to compare
    study.set_methods([MethodId.AVG, MethodId.SCH, MethodId.RFR_SCH])

    # Run 5x5-fold cross-validation
    report = study.evaluate()
    study.print_summary()
"""

__version__ = "0.1.0"

from .core import CaseTimeStudy
from .data_model import Dataset, SurgicalCase, load_dataset, read_dataset, write_dataset
from .errors import CaseTimeError
from .evaluation import EvaluationReport, cross_validate, make_folds
from .metric import MetricParams, PredictionPair, accuracy, loss, tolerance
from .predictors import Hyperparams, MethodId, Predictor

__all__ = [
    "CaseTimeError",
    "CaseTimeStudy",
    "Dataset",
    "EvaluationReport",
    "Hyperparams",
    "MethodId",
    "MetricParams",
    "PredictionPair",
    "Predictor",
    "SurgicalCase",
    "accuracy",
    "cross_validate",
    "load_dataset",
    "loss",
    "make_folds",
    "read_dataset",
    "tolerance",
    "write_dataset",
]
