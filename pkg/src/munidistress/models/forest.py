from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .common import unpack
from .tree import BinnedMatrix, Tree, fit_gini_tree


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    n_trees: int
    max_depth: int
    min_samples_split: int
    seed: int
    column_names: tuple[str, ...]

    family = "forest"

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    @property
    def params(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split}


def train_random_forest(X, weights=None, n_trees=100, max_depth=5, min_samples_split=2,
                        seed=0, *, y=None, column_names=None) -> ForestModel:
    """Bagged weighted-Gini trees with floor(sqrt(d)) features tried per node."""
    X, y, sw, names = unpack(X, y, weights, column_names)
    n, d = X.shape
    max_features = max(1, math.isqrt(d))
    rng = np.random.default_rng(seed)
    binned = BinnedMatrix(X)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, size=n)
        trees.append(fit_gini_tree(binned, boot, y, sw, max_depth, min_samples_split, rng,
                                   max_features))
    return ForestModel(tuple(trees), int(n_trees), int(max_depth), int(min_samples_split),
                       int(seed), names)
