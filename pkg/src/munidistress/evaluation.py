"""Splitting, cross-validation, grid search, metrics and ROC/PR curves."""

from __future__ import annotations

import hashlib
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import InvalidInputError
from .features import FeatureMatrix, Standardizer, apply_standardizer, fit_standardizer
from .models import (FAMILIES, class_weights, default_threshold, predict_labels,
                     predict_scores, train_model)
from .models import io as model_io

DECLARED_GRIDS = {
    "logistic": {"penalty": ["l1", "l2"], "C": [0.1, 0.5, 1, 5, 10]},
    "svm": {"kernel": ["linear", "rbf"], "C": [0.1, 0.5, 1, 5, 10],
            "gamma": [0.001, 0.01, 0.1]},
    "forest": {"n_trees": [100, 200, 300, 400], "max_depth": [3, 5, 7],
               "min_samples_split": [2, 5, 10]},
    "gbt": {"max_depth": [3, 5, 7], "learning_rate": [0.1, 0.01, 0.001],
            "n_estimators": [100, 200, 300, 400]},
}

CURVE_GRID = np.linspace(0.0, 1.0, 101)


def _labels_of(data) -> np.ndarray:
    if isinstance(data, FeatureMatrix):
        return np.asarray(data.labels)
    if hasattr(data, "frame"):
        return data.frame["label"].to_numpy()
    return np.asarray(data)


def stratified_split(data, train_fraction: float = 0.8, seed: int = 0):
    """Per-class shuffled split; returns (train_idx, test_idx) sorted ascending.

    Each class contributes round-half-up(n_c * train_fraction) rows to train,
    kept within [1, n_c - 1] so both sides see both classes.
    """
    if not 0 < train_fraction < 1:
        raise InvalidInputError("train_fraction must lie strictly between 0 and 1")
    y = _labels_of(data)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in (0, 1):
        members = np.flatnonzero(y == c)
        if len(members) < 2:
            raise InvalidInputError(f"class {c} has fewer than 2 members")
        members = rng.permutation(members)
        k = int(np.floor(len(members) * train_fraction + 0.5))
        k = min(max(k, 1), len(members) - 1)
        train.append(members[:k])
        test.append(members[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_kfold(data, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """k disjoint held-out folds with per-class counts within 1 of n_c / k."""
    if k < 2:
        raise InvalidInputError("k must be at least 2")
    y = _labels_of(data)
    rng = np.random.default_rng(seed)
    dealt = []
    for c in (0, 1):
        members = np.flatnonzero(y == c)
        if len(members) < k:
            raise InvalidInputError(f"class {c} has {len(members)} members, fewer than k={k}")
        dealt.append(rng.permutation(members))
    order = np.concatenate(dealt)
    slot = np.arange(len(order)) % k
    return [np.sort(order[slot == f]) for f in range(k)]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn}


def confusion(y_true, y_pred) -> ConfusionMatrix:
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    if y_true.shape != y_pred.shape:
        raise InvalidInputError("y_true and y_pred differ in length")
    return ConfusionMatrix(int(np.sum((y_true == 1) & (y_pred == 1))),
                           int(np.sum((y_true == 1) & (y_pred == 0))),
                           int(np.sum((y_true == 0) & (y_pred == 1))),
                           int(np.sum((y_true == 0) & (y_pred == 0))))


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClassificationMetrics:
    positive: ClassMetrics
    negative: ClassMetrics
    macro_f1: float
    accuracy: float

    def to_dict(self) -> dict:
        def one(m):
            return {"precision": m.precision, "recall": m.recall, "f1": m.f1,
                    "degenerate": list(m.degenerate)}
        return {"positive": one(self.positive), "negative": one(self.negative),
                "macro_f1": self.macro_f1, "accuracy": self.accuracy}


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def _class_metrics(tp, fp, fn) -> ClassMetrics:
    flags: list[str] = []
    p = _ratio(tp, tp + fp, "precision", flags)
    r = _ratio(tp, tp + fn, "recall", flags)
    f1 = _ratio(2 * p * r, p + r, "f1", flags)
    return ClassMetrics(p, r, f1, tuple(flags))


def metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    """Per-class precision/recall/F1 (0/0 -> 0, flagged), macro F1 and accuracy."""
    pos = _class_metrics(cm.tp, cm.fp, cm.fn)
    neg = _class_metrics(cm.tn, cm.fn, cm.fp)
    acc = (cm.tp + cm.tn) / cm.total if cm.total else 0.0
    return ClassificationMetrics(pos, neg, (pos.f1 + neg.f1) / 2, acc)


def macro_f1(y_true, y_pred) -> float:
    return metrics(confusion(y_true, y_pred)).macro_f1


@dataclass
class Curve:
    kind: str  # "roc" | "pr"
    x: np.ndarray  # fpr for roc, recall for pr
    y: np.ndarray  # tpr for roc, precision for pr
    thresholds: np.ndarray
    auc: float
    baseline: float | None = None

    def rows(self):
        """Point table rows (x, y, std); a single curve has zero dispersion."""
        return [(float(x), float(y), 0.0) for x, y in zip(self.x, self.y)]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "auc": self.auc, "n_points": int(len(self.x))}
        if self.baseline is not None:
            d["baseline"] = self.baseline
        return d


def _grouped_counts(y_true, scores):
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise InvalidInputError("labels and scores differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("curves need both classes present")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[np.nonzero(np.diff(s_sorted))[0], len(s_sorted) - 1]
    tps = np.cumsum(y_sorted)[last_of_group]
    fps = (last_of_group + 1) - tps
    return tps.astype(np.int64), fps.astype(np.int64), s_sorted[last_of_group], n_pos, n_neg


def roc_curve(y_true, scores) -> Curve:
    """ROC over distinct score thresholds; AUC by the trapezoid rule."""
    tps, fps, thr, P, N = _grouped_counts(y_true, scores)
    tps = np.r_[0, tps]
    fps = np.r_[0, fps]
    # trapezoids in integer arithmetic, normalized once
    twice_area = int(np.sum(np.diff(fps) * (tps[1:] + tps[:-1])))
    auc = twice_area / (2 * P * N)
    return Curve("roc", fps / N, tps / P, np.r_[np.inf, thr], auc)


def pr_curve(y_true, scores) -> Curve:
    """Precision/recall at each distinct threshold; area = average precision."""
    tps, fps, thr, P, N = _grouped_counts(y_true, scores)
    recall = tps / P
    precision = tps / (tps + fps)
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return Curve("pr", recall, precision, thr, ap, baseline=P / (P + N))


@dataclass
class AveragedCurve:
    kind: str
    grid: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    aucs: list[float] = field(default_factory=list)

    def rows(self):
        return [(float(x), float(m), float(s)) for x, m, s in zip(self.grid, self.mean, self.std)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_curves": len(self.aucs),
                "auc_mean": float(np.mean(self.aucs)), "auc_std": float(np.std(self.aucs)),
                "fold_aucs": list(self.aucs)}


def _roc_on_grid(c: Curve, grid) -> np.ndarray:
    # last point with fpr <= x carries the highest tpr reached at that fpr
    i = np.searchsorted(c.x, grid, side="right") - 1
    out = c.y[i].astype(float)
    inner = (c.x[i] < grid) & (i + 1 < len(c.x))
    j = i[inner]
    x0, x1 = c.x[j], c.x[j + 1]
    out[inner] = c.y[j] + (c.y[j + 1] - c.y[j]) * (grid[inner] - x0) / (x1 - x0)
    return out


def _pr_on_grid(c: Curve, grid) -> np.ndarray:
    # stepwise: precision of the first threshold whose recall reaches the grid level
    i = np.searchsorted(c.x, grid - 1e-12, side="left")
    i = np.minimum(i, len(c.x) - 1)
    return c.y[i].astype(float)


def average_curves(curves: list[Curve], grid=CURVE_GRID) -> AveragedCurve:
    if len(curves) < 2:
        raise InvalidInputError("need at least two curves to average")
    kinds = {c.kind for c in curves}
    if len(kinds) != 1:
        raise InvalidInputError("cannot average curves of different kinds")
    kind = kinds.pop()
    on_grid = np.array([_roc_on_grid(c, grid) if kind == "roc" else _pr_on_grid(c, grid)
                        for c in curves])
    return AveragedCurve(kind, np.asarray(grid), on_grid.mean(axis=0), on_grid.std(axis=0),
                         [c.auc for c in curves])


def expand_grid(family: str, grid: dict | None = None) -> list[dict]:
    """Cartesian product in declared key order; gamma is dropped for linear SVMs."""
    if family not in FAMILIES:
        raise InvalidInputError(f"unknown model family {family!r}")
    grid = DECLARED_GRIDS[family] if grid is None else grid
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise InvalidInputError("grid must be non-empty")
    keys = list(grid)
    out, seen = [], set()
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        if family == "svm" and str(params.get("kernel", "")).lower() == "linear":
            params.pop("gamma", None)
        key = tuple(sorted((k, repr(v)) for k, v in params.items()))
        if key not in seen:
            seen.add(key)
            out.append(params)
    return out


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def fit_preprocess(train: FeatureMatrix):
    """Standardizer and class weights learned on training rows only."""
    std = fit_standardizer(train)
    return std, class_weights(train.labels)


def _standardizer_digest(std: Standardizer) -> str:
    return hashlib.sha256(std.means.tobytes() + std.stds.tobytes()).hexdigest()[:16]


_SHARED: dict = {}


def _init_worker(matrix):
    _SHARED["matrix"] = matrix


def _eval_task(task):
    family, params, train_idx, test_idx, seed, threshold = task
    fm: FeatureMatrix = _SHARED["matrix"]
    train, test = fm.subset(train_idx), fm.subset(test_idx)
    std, weights = fit_preprocess(train)
    model = train_model(family, apply_standardizer(std, train), weights, params, seed)
    scores = predict_scores(model, apply_standardizer(std, test))
    f1 = macro_f1(test.labels, predict_labels(scores, threshold))
    return f1, scores, _standardizer_digest(std), std.means


def _run_tasks(matrix, tasks, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(matrix,)) as ex:
            return list(ex.map(_eval_task, tasks))
    _init_worker(matrix)
    try:
        return [_eval_task(t) for t in tasks]
    finally:
        _SHARED.clear()


@dataclass
class CandidateResult:
    params: dict
    fold_f1: list[float]

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.fold_f1))


@dataclass
class GridSearchResult:
    family: str
    candidates: list[CandidateResult]
    best_index: int
    n_folds: int
    fold_standardizer_digests: list[str]
    best_fold_scores: list[np.ndarray]
    best_fold_labels: list[np.ndarray]

    @property
    def best(self) -> CandidateResult:
        return self.candidates[self.best_index]

    def curves(self) -> tuple[AveragedCurve, AveragedCurve]:
        rocs = [roc_curve(y, s) for y, s in zip(self.best_fold_labels, self.best_fold_scores)]
        prs = [pr_curve(y, s) for y, s in zip(self.best_fold_labels, self.best_fold_scores)]
        return average_curves(rocs), average_curves(prs)

    def table(self):
        header = ["candidate", *self._param_keys(), "mean_macro_f1",
                  *[f"fold{i + 1}_macro_f1" for i in range(self.n_folds)]]
        rows = []
        for i, c in enumerate(self.candidates):
            rows.append([i, *[c.params.get(k, "") for k in self._param_keys()], c.mean_f1,
                         *c.fold_f1])
        return header, rows

    def _param_keys(self):
        keys = []
        for c in self.candidates:
            keys.extend(k for k in c.params if k not in keys)
        return keys

    def to_dict(self) -> dict:
        return {"family": self.family, "n_candidates": len(self.candidates),
                "n_folds": self.n_folds, "best_index": self.best_index,
                "best_params": self.best.params, "best_mean_macro_f1": self.best.mean_f1,
                "candidates": [{"params": c.params, "mean_macro_f1": c.mean_f1,
                                "fold_macro_f1": c.fold_f1} for c in self.candidates],
                "fold_standardizer_digests": self.fold_standardizer_digests}


def grid_search(family: str, matrix: FeatureMatrix, grid: dict | list | None = None,
                folds: list[np.ndarray] | None = None, seed: int = 0, k: int = 5,
                jobs: int = 1, threshold: float | None = None) -> GridSearchResult:
    """Exhaustive search ranked by mean held-out macro F1.

    ``matrix`` is unscaled; each fold refits the standardizer and class
    weights on its own training portion. Ties keep the earliest candidate.
    """
    candidates = grid if isinstance(grid, list) else expand_grid(family, grid)
    if not candidates:
        raise InvalidInputError("grid must be non-empty")
    folds = folds if folds is not None else stratified_kfold(matrix, k, seed)
    thr = default_threshold(family) if threshold is None else threshold
    all_idx = np.arange(len(matrix))
    tasks = []
    for params in candidates:
        for f, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(all_idx, test_idx)
            tasks.append((family, params, train_idx, test_idx, derive_seed(seed, 1, f), thr))
    results = _run_tasks(matrix, tasks, jobs)
    nf = len(folds)
    cand = [CandidateResult(p, [float(results[i * nf + f][0]) for f in range(nf)])
            for i, p in enumerate(candidates)]
    means = [c.mean_f1 for c in cand]
    best = int(np.argmax(means))  # first maximum
    best_res = results[best * nf:(best + 1) * nf]
    return GridSearchResult(family, cand, best, nf, [r[2] for r in results[:nf]],
                            [r[1] for r in best_res],
                            [matrix.labels[fold] for fold in folds])


def cross_validate(family: str, matrix: FeatureMatrix, params: dict, k: int = 5,
                   seed: int = 0, jobs: int = 1, threshold: float | None = None):
    return grid_search(family, matrix, [params], None, seed, k, jobs, threshold)


@dataclass
class EvaluationReport:
    family: str
    params: dict
    threshold: float
    n_train: int
    n_test: int
    confusion: ConfusionMatrix
    metrics: ClassificationMetrics
    roc: Curve
    pr: Curve
    model: dict
    test_scores: np.ndarray
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": "evaluation_report", "family": self.family, "params": self.params,
                "threshold": self.threshold, "n_train": self.n_train, "n_test": self.n_test,
                "confusion_matrix": self.confusion.to_dict(), "metrics": self.metrics.to_dict(),
                "roc": self.roc.to_dict(), "pr": self.pr.to_dict(),
                "test_prevalence": self.pr.baseline, **self.extra, "model": self.model}


def final_fit_and_test(family: str, params: dict, train: FeatureMatrix, test: FeatureMatrix,
                       threshold: float | None = None, seed: int = 0):
    """Refit preprocessing and model on all training rows, score the held-out set.

    Returns (report, model, standardizer).
    """
    overlap = set(train.row_keys) & set(test.row_keys)
    if overlap:
        raise InvalidInputError("train and test sets overlap")
    std, weights = fit_preprocess(train)
    model = train_model(family, apply_standardizer(std, train), weights, params, seed)
    scores = predict_scores(model, apply_standardizer(std, test))
    thr = default_threshold(family) if threshold is None else float(threshold)
    cm = confusion(test.labels, predict_labels(scores, thr))
    serialized = model_io.model_to_dict(model, std, {"seed": seed,
                                                     "class_weights": weights.to_dict(),
                                                     "n_train": len(train)})
    report = EvaluationReport(family, dict(model.params), thr, len(train), len(test), cm,
                              metrics(cm), roc_curve(test.labels, scores),
                              pr_curve(test.labels, scores), serialized, scores)
    return report, model, std
