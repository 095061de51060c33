from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import InvalidInputError
from ..features import FeatureMatrix


@dataclass(frozen=True)
class ClassWeights:
    weight_negative: float
    weight_positive: float

    def __post_init__(self):
        if not (self.weight_negative > 0 and self.weight_positive > 0):
            raise InvalidInputError("class weights must be positive")

    def per_row(self, y: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(y) == 1, self.weight_positive, self.weight_negative)

    def to_dict(self) -> dict:
        return {"weight_negative": self.weight_negative, "weight_positive": self.weight_positive}


UNIT_WEIGHTS = ClassWeights(1.0, 1.0)


def class_weights(labels) -> ClassWeights:
    """Balanced inverse-frequency weights n / (2 n_c)."""
    y = np.asarray(labels)
    n = len(y)
    n_pos = int(np.sum(y == 1))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("class weights need both classes present")
    return ClassWeights(n / (2 * n_neg), n / (2 * n_pos))


def unpack(X, y=None, weights=None, column_names=None):
    """Normalise trainer inputs to (X array, y array, row weights, column names)."""
    if isinstance(X, FeatureMatrix):
        names = X.column_names
        y = X.labels if y is None else y
        X = X.X
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = tuple(column_names) if column_names is not None else \
            tuple(f"x{j}" for j in range(X.shape[1]))
    if y is None:
        raise InvalidInputError("labels required")
    y = np.asarray(y).astype(int)
    if X.shape[0] == 0:
        raise InvalidInputError("empty training matrix")
    if X.shape[0] != len(y):
        raise InvalidInputError("matrix and label lengths differ")
    if weights is None:
        sw = np.ones(len(y))
    elif isinstance(weights, ClassWeights):
        sw = weights.per_row(y)
    else:
        sw = np.asarray(weights, dtype=float)
    return X, y, sw, names


def predict_labels(scores, threshold: float = 0.5) -> np.ndarray:
    """Label 1 where score >= threshold (ties go to the positive class)."""
    return (np.asarray(scores) >= threshold).astype(int)
