"""The end-to-end workflow: clean, lag, encode, split, search, refit, test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import LAGGED_INDICATORS, Panel
from .evaluation import (EvaluationReport, GridSearchResult, derive_seed, final_fit_and_test,
                         grid_search, stratified_kfold, stratified_split)
from .features import FeatureMatrix, Standardizer, build_features
from .ingest import CleaningPolicy, CleaningReport, clean

# stage tags for splitting one run seed into independent streams
SPLIT, FOLDS, MODEL = 0, 1, 2


@dataclass
class PipelineConfig:
    family: str = "logistic"
    grid: dict | None = None  # None searches the family's declared grid
    params: dict | None = None  # fixed hyperparameters; skips the search
    train_fraction: float = 0.8
    k: int = 5
    seed: int = 0
    threshold: float | None = None
    jobs: int = 1
    lagged: tuple[str, ...] = LAGGED_INDICATORS


@dataclass
class PipelineResult:
    panel: Panel
    cleaning: CleaningReport | None
    features: FeatureMatrix
    n_lag_imputed: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    search: GridSearchResult | None
    evaluation: EvaluationReport
    model: object
    standardizer: Standardizer

    @property
    def train(self) -> FeatureMatrix:
        return self.features.subset(self.train_idx)

    @property
    def test(self) -> FeatureMatrix:
        return self.features.subset(self.test_idx)


def split_features(features: FeatureMatrix, cfg: PipelineConfig):
    return stratified_split(features, cfg.train_fraction, derive_seed(cfg.seed, SPLIT))


def run_pipeline(panel: Panel, cfg: PipelineConfig = PipelineConfig(),
                 policy: CleaningPolicy | None = CleaningPolicy()) -> PipelineResult:
    """Run the full workflow on a merged panel; ``policy=None`` skips cleaning."""
    report = None
    if policy is not None:
        panel, report = clean(panel, policy)
    features, n_imputed = build_features(panel, cfg.lagged)
    train_idx, test_idx = split_features(features, cfg)
    train = features.subset(train_idx)
    search = None
    params = cfg.params
    if params is None:
        folds = stratified_kfold(train, cfg.k, derive_seed(cfg.seed, FOLDS))
        search = grid_search(cfg.family, train, cfg.grid, folds, derive_seed(cfg.seed, MODEL),
                             jobs=cfg.jobs, threshold=cfg.threshold)
        params = search.best.params
    evaluation, model, std = final_fit_and_test(cfg.family, params, train,
                                                features.subset(test_idx), cfg.threshold,
                                                derive_seed(cfg.seed, MODEL))
    if search is not None:
        roc, pr = search.curves()
        evaluation.extra["cv"] = {"roc": roc.to_dict(), "pr": pr.to_dict(),
                                  "best_params": search.best.params,
                                  "best_mean_macro_f1": search.best.mean_f1}
    evaluation.extra["n_lag_imputed"] = n_imputed
    return PipelineResult(panel, report, features, n_imputed, train_idx, test_idx, search,
                          evaluation, model, std)
