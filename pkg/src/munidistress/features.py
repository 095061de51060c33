"""Design-matrix construction: lagged deltas, one-hot encoding, scaling, PCA."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .domain import (BINARY_INDICATORS, CATEGORY_LABELS, EmptyDatasetError,
                     GEO_AREAS, InvalidInputError, LAGGED_INDICATORS,
                     NUMERIC_INDICATORS, Panel, RISK_LEVELS)

DELTA_PREFIX = "delta_"

ONE_HOT_LEVELS = {
    "demographic_category": tuple(range(1, 13)),
    "geo_area": GEO_AREAS,
    "bankruptcy_risk": RISK_LEVELS,
}


def level_name(field_name: str, level) -> str:
    if field_name == "demographic_category":
        level = CATEGORY_LABELS[int(level) - 1]
    return f"{field_name}={level}"


def one_hot_columns() -> list[str]:
    return [level_name(f, lv) for f, levels in ONE_HOT_LEVELS.items() for lv in levels]


def numeric_columns(lagged=LAGGED_INDICATORS) -> list[str]:
    return list(NUMERIC_INDICATORS) + [DELTA_PREFIX + f for f in lagged]


def design_columns(lagged=LAGGED_INDICATORS) -> list[str]:
    return numeric_columns(lagged) + list(BINARY_INDICATORS) + one_hot_columns()


@dataclass
class FeatureMatrix:
    X: np.ndarray
    column_names: tuple[str, ...]
    municipality_ids: np.ndarray
    years: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.column_names = tuple(self.column_names)
        if len(set(self.column_names)) != len(self.column_names):
            raise InvalidInputError("duplicate column names")
        n = self.X.shape[0]
        if not (len(self.municipality_ids) == len(self.years) == len(self.labels) == n):
            raise InvalidInputError("row keys, labels and matrix rows disagree in length")
        if self.X.ndim != 2 or self.X.shape[1] != len(self.column_names):
            raise InvalidInputError("matrix width does not match column names")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def row_keys(self) -> list[tuple[str, int]]:
        return list(zip(self.municipality_ids.tolist(), self.years.tolist()))

    def subset(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(self.X[idx], self.column_names, self.municipality_ids[idx],
                             self.years[idx], self.labels[idx])

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.column_names.index(name)]

    def select_columns(self, names) -> "FeatureMatrix":
        missing = [n for n in names if n not in self.column_names]
        if missing:
            raise InvalidInputError(f"missing column(s): {', '.join(missing)}")
        pos = [self.column_names.index(n) for n in names]
        return replace(self, X=self.X[:, pos], column_names=tuple(names))

    def to_csv(self, path, delimiter: str = ",") -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            writer.writerow(["municipality_id", "year", *self.column_names, "label"])
            for mid, year, row, y in zip(self.municipality_ids, self.years, self.X.tolist(),
                                         self.labels):
                writer.writerow([mid, int(year), *map(repr, row), int(y)])

    @classmethod
    def from_csv(cls, path, delimiter: str = ",") -> "FeatureMatrix":
        frame = pd.read_csv(path, sep=delimiter, dtype={"municipality_id": str},
                            float_precision="round_trip")
        for col in ("municipality_id", "year", "label"):
            if col not in frame.columns:
                raise InvalidInputError(f"feature table lacks column {col!r}")
        names = [c for c in frame.columns if c not in ("municipality_id", "year", "label")]
        return cls(frame[names].to_numpy(dtype=float), names,
                   frame["municipality_id"].to_numpy(dtype=object),
                   frame["year"].to_numpy(dtype=int), frame["label"].to_numpy(dtype=int))


def lagged_deltas(panel: Panel, feature_names=LAGGED_INDICATORS) -> tuple[Panel, int]:
    """Add ``delta_<name>`` = value(t) - value(t-1) per municipality.

    Records without a same-municipality row at t-1 get delta 0; the number
    of such records is returned alongside the augmented panel.
    """
    unknown = [f for f in feature_names if f not in LAGGED_INDICATORS]
    if unknown:
        raise InvalidInputError(f"cannot lag unknown feature(s): {', '.join(unknown)}")
    frame = panel.frame.copy()
    prev = frame[["municipality_id", "year", *feature_names]].copy()
    prev["year"] = prev["year"] + 1
    prev["_has_prev"] = True
    merged = frame[["municipality_id", "year"]].merge(
        prev, on=["municipality_id", "year"], how="left", validate="many_to_one")
    has_prev = merged["_has_prev"].eq(True).to_numpy()
    for name in feature_names:
        prev_vals = merged[name].to_numpy(dtype=float)
        delta = frame[name].to_numpy(dtype=float) - prev_vals
        frame[DELTA_PREFIX + name] = np.where(has_prev, delta, 0.0)
    n_imputed = int((~has_prev).sum())
    return Panel(frame, panel.year_range), n_imputed


def one_hot(frame: pd.DataFrame, fields=tuple(ONE_HOT_LEVELS)) -> tuple[np.ndarray, list[str]]:
    """Indicator columns over the full declared vocabulary of each field."""
    blocks, names = [], []
    for f in fields:
        levels = ONE_HOT_LEVELS[f]
        values = frame[f].to_numpy()
        if f != "geo_area":
            values = values.astype(int)
        block = np.zeros((len(frame), len(levels)))
        for j, lv in enumerate(levels):
            block[:, j] = values == lv
        blocks.append(block)
        names.extend(level_name(f, lv) for lv in levels)
    return np.hstack(blocks), names


def build_features(panel: Panel, lagged=LAGGED_INDICATORS) -> tuple[FeatureMatrix, int]:
    """Unscaled design matrix for a cleaned panel, plus the lag-imputation count."""
    panel = panel.sorted()
    augmented, n_imputed = lagged_deltas(panel, lagged)
    frame = augmented.frame
    numeric = frame[numeric_columns(lagged) + list(BINARY_INDICATORS)].to_numpy(dtype=float)
    encoded, enc_names = one_hot(frame)
    X = np.hstack([numeric, encoded])
    names = numeric_columns(lagged) + list(BINARY_INDICATORS) + enc_names
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("non-finite values in design matrix; clean the panel first")
    fm = FeatureMatrix(X, names, frame["municipality_id"].to_numpy(dtype=object),
                       frame["year"].to_numpy(dtype=int), frame["label"].to_numpy(dtype=int))
    return fm, n_imputed


@dataclass(frozen=True)
class Standardizer:
    columns: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    zero_variance: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "means": self.means.tolist(),
                "stds": self.stds.tolist(), "zero_variance": list(self.zero_variance)}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(tuple(d["columns"]), np.asarray(d["means"], float),
                   np.asarray(d["stds"], float), tuple(d.get("zero_variance", ())))


def fit_standardizer(train: FeatureMatrix, columns=None) -> Standardizer:
    if len(train) == 0:
        raise EmptyDatasetError("cannot fit a standardizer on an empty matrix")
    columns = tuple(columns) if columns is not None else tuple(
        c for c in train.column_names if c in numeric_columns(_lagged_in(train.column_names)))
    X = train.select_columns(columns).X
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # ddof=0
    zero = stds <= 1e-12 * np.maximum(1.0, np.abs(means))
    stds = np.where(zero, 1.0, stds)
    means = np.where(zero, 0.0, means)
    return Standardizer(columns, means, stds, tuple(c for c, z in zip(columns, zero) if z))


def _lagged_in(names) -> tuple[str, ...]:
    return tuple(n[len(DELTA_PREFIX):] for n in names if n.startswith(DELTA_PREFIX))


def apply_standardizer(s: Standardizer, m: FeatureMatrix) -> FeatureMatrix:
    missing = [c for c in s.columns if c not in m.column_names]
    if missing:
        raise InvalidInputError(f"matrix lacks fitted column(s): {', '.join(missing)}")
    X = m.X.copy()
    pos = [m.column_names.index(c) for c in s.columns]
    X[:, pos] = (X[:, pos] - s.means) / s.stds
    return replace(m, X=X)


@dataclass(frozen=True)
class PCAModel:
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance: np.ndarray  # top-k eigenvalues
    explained_variance_ratio: np.ndarray
    means: np.ndarray
    column_names: tuple[str, ...]


def fit_pca(m: FeatureMatrix, k: int) -> PCAModel:
    """Principal components of the sample covariance (ddof=1)."""
    n, d = m.X.shape
    if not 1 <= k <= d:
        raise InvalidInputError(f"component count {k} outside 1..{d}")
    if n < 2:
        raise EmptyDatasetError("PCA needs at least two rows")
    means = m.X.mean(axis=0)
    centered = m.X - means
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order].T
    # sign convention: largest-magnitude coordinate positive
    pivots = np.argmax(np.abs(evecs), axis=1)
    signs = np.sign(evecs[np.arange(d), pivots])
    evecs = evecs * signs[:, None]
    total = evals.sum()
    ratios = evals / total if total > 0 else np.zeros(d)
    return PCAModel(evecs[:k], evals[:k], ratios[:k], means, m.column_names)


def project(p: PCAModel, m: FeatureMatrix) -> np.ndarray:
    if tuple(m.column_names) != p.column_names:
        raise InvalidInputError("matrix columns differ from those the PCA was fitted on")
    return (m.X - p.means) @ p.components.T


def write_pca_scores(path, m: FeatureMatrix, scores: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["municipality_id", "year", "pc1", "pc2", "label"])
        for mid, year, s, y in zip(m.municipality_ids, m.years, scores.tolist(), m.labels):
            writer.writerow([mid, int(year), repr(s[0]), repr(s[1] if len(s) > 1 else 0.0), int(y)])
