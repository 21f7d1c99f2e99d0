"""Classifiers (LDA, LR, linear SVM, small CNN) behind one train/score interface."""

from .cnn import CnnParams
from .core import (
    KINDS,
    ClassifierModel,
    CvResult,
    Metrics,
    TrainConfig,
    WindowStacks,
    build_stacks,
    cross_validate,
    evaluate,
    fit,
    load_model,
    metrics_from_predictions,
    predict_batch,
    predict_score,
    save_model,
)
from .lda import LdaParams
from .logreg import LinearParams

__all__ = [
    "KINDS",
    "ClassifierModel",
    "CnnParams",
    "CvResult",
    "LdaParams",
    "LinearParams",
    "Metrics",
    "TrainConfig",
    "WindowStacks",
    "build_stacks",
    "cross_validate",
    "evaluate",
    "fit",
    "load_model",
    "metrics_from_predictions",
    "predict_batch",
    "predict_score",
    "save_model",
]
