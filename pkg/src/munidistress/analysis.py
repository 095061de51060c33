"""Post-hoc analyses: forward tracking of false positives and coefficient ranking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import InvalidInputError, Panel, UnsupportedModelError
from .features import FeatureMatrix, Standardizer, apply_standardizer
from .models import LogisticModel, default_threshold, predict_labels, predict_scores


@dataclass
class ForwardFpReport:
    anchor_year: int
    horizon: int
    threshold: float
    n_evaluated: int
    n_true_positive: int
    n_false_positive: int
    n_fp_later_distressed: int
    fraction_later_distressed: float
    degenerate: bool
    years_observed: list[int]
    n_fp_censored: int  # FPs missing at least one year of the window
    detail: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": "forward_fp_report", "anchor_year": self.anchor_year,
                "horizon": self.horizon, "threshold": self.threshold,
                "n_evaluated": self.n_evaluated, "n_true_positive": self.n_true_positive,
                "n_false_positive": self.n_false_positive,
                "n_fp_later_distressed": self.n_fp_later_distressed,
                "fraction_later_distressed": self.fraction_later_distressed,
                "degenerate": self.degenerate,
                "coverage": {"window": [self.anchor_year + 1, self.anchor_year + self.horizon],
                             "years_observed": self.years_observed,
                             "n_fp_censored": self.n_fp_censored}}

    def table(self):
        header = ["municipality_id", "score", "first_later_distress_year", "years_observed"]
        rows = [[d["municipality_id"], d["score"], d["first_later_distress_year"] or "",
                 d["years_observed"]] for d in self.detail]
        return header, rows


def forward_fp_analysis(model, test: FeatureMatrix, panel: Panel, anchor_year: int,
                        horizon: int = 4, threshold: float | None = None,
                        standardizer: Standardizer | None = None) -> ForwardFpReport:
    """Follow the anchor-year false positives of ``test`` over the next ``horizon`` years.

    A false positive counts as later distressed when the panel has a label-1
    record for the same municipality in (anchor_year, anchor_year + horizon].
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be at least 1")
    frame = panel.frame
    if not (frame["year"] == anchor_year).any():
        raise InvalidInputError(f"anchor year {anchor_year} absent from panel")
    at_anchor = test.years == anchor_year
    if not at_anchor.any():
        raise InvalidInputError(f"anchor year {anchor_year} absent from the evaluated rows")
    rows = test.subset(np.flatnonzero(at_anchor))
    if standardizer is not None:
        rows = apply_standardizer(standardizer, rows)
    thr = default_threshold(model) if threshold is None else float(threshold)
    scores = predict_scores(model, rows)
    pred = predict_labels(scores, thr)
    tp = int(np.sum((pred == 1) & (rows.labels == 1)))
    fp_mask = (pred == 1) & (rows.labels == 0)

    window = frame[(frame["year"] > anchor_year) & (frame["year"] <= anchor_year + horizon)]
    observed = window.groupby("municipality_id")["year"].nunique().to_dict()
    later = window[window["label"] == 1].groupby("municipality_id")["year"].min().to_dict()

    detail = []
    for mid, score in zip(rows.municipality_ids[fp_mask], scores[fp_mask]):
        first = later.get(mid)
        detail.append({"municipality_id": str(mid), "score": float(score),
                       "first_later_distress_year": None if first is None else int(first),
                       "years_observed": int(observed.get(mid, 0))})
    n_fp = len(detail)
    n_later = sum(d["first_later_distress_year"] is not None for d in detail)
    return ForwardFpReport(
        int(anchor_year), int(horizon), thr, len(rows), tp, n_fp, n_later,
        n_later / n_fp if n_fp else 0.0, n_fp == 0,
        sorted(int(y) for y in window["year"].unique()),
        sum(d["years_observed"] < horizon for d in detail), detail)


@dataclass
class CoefficientReport:
    entries: list[tuple[str, float]]  # sorted by value, descending
    intercept: float
    groups: dict[str, list[str]]

    def to_dict(self) -> dict:
        return {"kind": "coefficient_report", "intercept": self.intercept,
                "coefficients": [{"feature": n, "value": v} for n, v in self.entries],
                "groups": self.groups}

    def table(self):
        return ["feature", "parent", "coefficient"], [
            [n, n.split("=", 1)[0] if "=" in n else "", v] for n, v in self.entries]


def coefficient_report(model, feature_names=None) -> CoefficientReport:
    """Logistic coefficients joined to their columns, largest signed value first."""
    if not isinstance(model, LogisticModel):
        raise UnsupportedModelError(
            f"coefficient report needs a logistic model, got {getattr(model, 'family', model)!r}")
    names = list(model.column_names if feature_names is None else feature_names)
    coef = np.asarray(model.coefficients, dtype=float)
    if len(names) != len(coef):
        raise InvalidInputError("feature names and coefficients differ in length")
    order = sorted(range(len(coef)), key=lambda j: -coef[j])  # stable on ties
    groups: dict[str, list[str]] = {}
    for n in names:
        if "=" in n:
            groups.setdefault(n.split("=", 1)[0], []).append(n)
    return CoefficientReport([(names[j], float(coef[j])) for j in order],
                             float(model.intercept), groups)
