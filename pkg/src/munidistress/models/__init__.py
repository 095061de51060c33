"""Trainers for the four model families and a common scoring surface."""

from __future__ import annotations

import numpy as np

from ..domain import InvalidInputError
from ..features import FeatureMatrix
from .common import ClassWeights, UNIT_WEIGHTS, class_weights, predict_labels
from .forest import ForestModel, train_random_forest
from .gbt import BoostedModel, train_gbt
from .logistic import LogisticModel, train_logistic
from .svm import SvmModel, train_svm

FAMILIES = ("logistic", "svm", "forest", "gbt")
TrainedModel = LogisticModel | SvmModel | ForestModel | BoostedModel

DEFAULT_PARAMS = {
    "logistic": {"penalty": "l2", "C": 5.0},
    "svm": {"kernel": "linear", "C": 1.0},
    "forest": {"n_trees": 100, "max_depth": 7, "min_samples_split": 5},
    "gbt": {"n_estimators": 100, "max_depth": 5, "learning_rate": 0.1},
}


def train_model(family: str, X, weights=None, params: dict | None = None, seed: int = 0,
                **kwargs) -> TrainedModel:
    params = dict(DEFAULT_PARAMS[family] if params is None else params)
    if family == "logistic":
        return train_logistic(X, weights, params.get("penalty", "l2"), params.get("C", 1.0),
                              **kwargs)
    if family == "svm":
        return train_svm(X, weights, params.get("kernel", "linear"), params.get("C", 1.0),
                         params.get("gamma"), **kwargs)
    if family == "forest":
        return train_random_forest(X, weights, params.get("n_trees", 100),
                                   params.get("max_depth", 5),
                                   params.get("min_samples_split", 2), seed, **kwargs)
    if family == "gbt":
        return train_gbt(X, weights, params.get("n_estimators", 100), params.get("max_depth", 3),
                         params.get("learning_rate", 0.1), seed, **kwargs)
    raise InvalidInputError(f"unknown model family {family!r}")


def aligned_matrix(model: TrainedModel, X) -> np.ndarray:
    """Rows of X in the model's column order; raises when a column is missing."""
    if isinstance(X, FeatureMatrix):
        missing = [c for c in model.column_names if c not in X.column_names]
        if missing:
            raise InvalidInputError(f"matrix lacks training column(s): {', '.join(missing)}")
        if X.column_names == model.column_names:
            return X.X
        return X.select_columns(model.column_names).X
    X = np.asarray(X, float)
    if X.ndim != 2 or X.shape[1] != len(model.column_names):
        raise InvalidInputError(
            f"expected {len(model.column_names)} columns, got {X.shape[-1] if X.ndim else 0}")
    return X


def predict_scores(model: TrainedModel, X) -> np.ndarray:
    """Probability for logistic/forest/gbt; signed margin for svm."""
    A = aligned_matrix(model, X)
    if isinstance(model, SvmModel):
        return model.decision_function(A)
    return model.predict_proba(A)


def default_threshold(model_or_family) -> float:
    family = model_or_family if isinstance(model_or_family, str) else model_or_family.family
    return 0.0 if family == "svm" else 0.5


__all__ = [
    "FAMILIES", "DEFAULT_PARAMS", "ClassWeights", "UNIT_WEIGHTS", "class_weights",
    "predict_labels", "predict_scores", "default_threshold", "train_model", "train_logistic",
    "train_svm", "train_random_forest", "train_gbt", "LogisticModel", "SvmModel",
    "ForestModel", "BoostedModel", "TrainedModel",
]
