"""Versioned JSON serialization for trained models.

Floats are written with ``repr`` precision by the json module, so a
save/load round trip reproduces predictions bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from ..domain import InvalidInputError
from ..features import Standardizer
from . import BoostedModel, ForestModel, LogisticModel, SvmModel
from .tree import Tree

FORMAT = "munidistress-model"
VERSION = 1


def model_to_dict(model, standardizer: Standardizer | None = None,
                  metadata: dict | None = None) -> dict:
    d = {"format": FORMAT, "version": VERSION, "family": model.family,
         "hyperparameters": model.params, "column_names": list(model.column_names),
         "metadata": metadata or {}}
    if isinstance(model, LogisticModel):
        d["parameters"] = {"coefficients": model.coefficients.tolist(),
                           "intercept": model.intercept, "converged": model.converged,
                           "n_iter": model.n_iter}
    elif isinstance(model, SvmModel):
        p = {"bias": model.bias, "converged": model.converged, "n_iter": model.n_iter}
        if model.kernel == "linear":
            p["weights"] = model.weights.tolist()
        else:
            p["support_vectors"] = model.support_vectors.tolist()
            p["dual_coef"] = model.dual_coef.tolist()
        d["parameters"] = p
    elif isinstance(model, ForestModel):
        d["parameters"] = {"seed": model.seed, "trees": [t.to_dict() for t in model.trees]}
    elif isinstance(model, BoostedModel):
        d["parameters"] = {"seed": model.seed, "base_score": model.base_score,
                           "trees": [t.to_dict() for t in model.trees]}
    else:
        raise InvalidInputError(f"cannot serialize {type(model).__name__}")
    if standardizer is not None:
        d["standardizer"] = standardizer.to_dict()
    return d


def model_from_dict(d: dict):
    """Returns (model, standardizer or None, metadata)."""
    if d.get("format") != FORMAT:
        raise InvalidInputError("not a serialized model")
    if d.get("version") != VERSION:
        raise InvalidInputError(f"unsupported model format version {d.get('version')}")
    hp, p = d["hyperparameters"], d["parameters"]
    names = tuple(d["column_names"])
    family = d["family"]
    if family == "logistic":
        model = LogisticModel(np.asarray(p["coefficients"], float), float(p["intercept"]),
                              hp["penalty"], float(hp["C"]), names, p["converged"], p["n_iter"])
    elif family == "svm":
        if hp["kernel"] == "linear":
            model = SvmModel("linear", float(hp["C"]), None, float(p["bias"]), names,
                             weights=np.asarray(p["weights"], float),
                             converged=p["converged"], n_iter=p["n_iter"])
        else:
            model = SvmModel("rbf", float(hp["C"]), float(hp["gamma"]), float(p["bias"]), names,
                             support_vectors=np.asarray(p["support_vectors"], float).reshape(
                                 -1, len(names)),
                             dual_coef=np.asarray(p["dual_coef"], float),
                             converged=p["converged"], n_iter=p["n_iter"])
    elif family == "forest":
        model = ForestModel(tuple(Tree.from_dict(t) for t in p["trees"]), hp["n_trees"],
                            hp["max_depth"], hp["min_samples_split"], p["seed"], names)
    elif family == "gbt":
        model = BoostedModel(float(p["base_score"]), tuple(Tree.from_dict(t) for t in p["trees"]),
                             hp["n_estimators"], hp["max_depth"], float(hp["learning_rate"]),
                             p["seed"], names)
    else:
        raise InvalidInputError(f"unknown model family {family!r}")
    std = Standardizer.from_dict(d["standardizer"]) if "standardizer" in d else None
    return model, std, d.get("metadata", {})


def dumps(model, standardizer=None, metadata=None) -> str:
    return json.dumps(model_to_dict(model, standardizer, metadata), indent=1, sort_keys=True)


def loads(text: str):
    return model_from_dict(json.loads(text))
