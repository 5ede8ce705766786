"""The five compared classifiers behind one fit/predict surface."""

from .knn import KnnClassifier, pairwise_distances
from .linear import LinearSvm, LogisticRegression, logistic_loss_grad
from .model import (
    KINDS,
    KIND_TITLES,
    Model,
    ModelSpec,
    default_knn_grid,
    fit,
    load_model,
    predict,
    read_model,
    save_model,
    write_model,
)
from .trees import BoostedTrees, RandomForest, Tree

__all__ = [
    "KINDS", "KIND_TITLES", "Model", "ModelSpec", "default_knn_grid", "fit", "predict",
    "save_model", "load_model", "read_model", "write_model", "KnnClassifier", "LogisticRegression",
    "LinearSvm", "RandomForest", "BoostedTrees", "Tree", "logistic_loss_grad", "pairwise_distances",
]
