from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .common import unpack
from .tree import BinnedMatrix, Tree, fit_newton_tree

REG_LAMBDA = 1.0


@dataclass(frozen=True)
class BoostedModel:
    base_score: float
    trees: tuple[Tree, ...]
    n_estimators: int
    max_depth: int
    learning_rate: float
    seed: int
    column_names: tuple[str, ...]

    family = "gbt"

    def decision_function(self, X: np.ndarray, n_rounds: int | None = None) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees[:n_rounds]:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    @property
    def params(self) -> dict:
        return {"n_estimators": self.n_estimators, "max_depth": self.max_depth,
                "learning_rate": self.learning_rate}


def weighted_logloss(margin, y, sw) -> float:
    return float(np.dot(sw, np.logaddexp(0.0, margin) - y * margin) / sw.sum())


def train_gbt(X, weights=None, n_estimators=100, max_depth=3, learning_rate=0.1, seed=0,
              *, y=None, column_names=None) -> BoostedModel:
    """Stagewise boosting of the weighted logistic loss with Newton leaf values.

    Every round uses all rows and all features, so ``seed`` only labels the run.
    """
    X, y, sw, names = unpack(X, y, weights, column_names)
    yf = y.astype(float)
    rate = np.dot(sw, yf) / sw.sum()
    base = float(logit(np.clip(rate, 1e-12, 1 - 1e-12)))
    margin = np.full(len(y), base)
    binned = BinnedMatrix(X)
    trees = []
    for _ in range(n_estimators):
        p = expit(margin)
        g = sw * (p - yf)
        h = sw * p * (1 - p)
        tree = fit_newton_tree(binned, g, h, max_depth, REG_LAMBDA)
        margin = margin + learning_rate * tree.predict(X)
        trees.append(tree)
    return BoostedModel(base, tuple(trees), int(n_estimators), int(max_depth),
                        float(learning_rate), int(seed), names)
