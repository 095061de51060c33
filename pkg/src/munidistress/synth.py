"""Synthetic municipality panels drawn from a planted logistic model.

Each municipality carries a latent fiscal health score that drifts over the
years; indicators are affine in that score plus per-year noise, so levels
and year-over-year deltas both carry signal. Labels come from a planted
coefficient vector over the encoded design columns, with the intercept
calibrated to a target prevalence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import expit

from .domain import (ARCHIVE_FIRST_YEAR, BANKRUPTCY, DEFAULT_YEARS, GEO_AREAS,
                     LAGGED_INDICATORS, NUMERIC_INDICATORS, PANEL_FRAME_COLUMNS,
                     PRE_DISTRESS, CalibrationError, DistressArchive, InvalidInputError,
                     Panel, category_codes)
from .features import DELTA_PREFIX, design_columns, level_name

# (base, scale, loading on health) per indicator
INDICATOR_SHAPE = {
    "incidence_of_investment": (22.0, 6.0, 0.3),
    "financial_autonomy_degree": (60.0, 12.0, 0.3),
    "indebtedness_per_capita": (900.0, 120.0, -0.3),
    "total_investment_financed_by_debt": (30.0, 8.0, 0.3),
    "rigid_expenditure": (45.0, 7.0, -0.3),
    "expense_management_speed": (70.0, 10.0, -0.3),
    "collecting_capacity": (75.0, 9.0, 0.3),
    "extra_budgetary_debts": (60.0, 8.0, 0.3),
}
NONNEGATIVE = ("indebtedness_per_capita", "extra_budgetary_debts")

DEFAULT_REGIONAL_MIX = {"north-west": 0.17, "north-east": 0.13, "center": 0.12,
                        "south": 0.38, "islands": 0.20}
REGIONAL_HEALTH = {"north-west": 0.2, "north-east": 0.25, "center": 0.1,
                   "south": -0.25, "islands": -0.2}

HEALTH_STEP = 0.3
DRIFT_SCALE = 0.1
OFF_BALANCE_CUT = 2.3
BISECT_BOUNDS = (-40.0, 40.0)
BISECT_ITERS = 60
CALIBRATION_TOL = 0.02


def default_coefficients() -> dict[str, float]:
    beta = dict.fromkeys(design_columns(), 0.0)
    beta.update({
        "incidence_of_investment": -1.0,
        "financial_autonomy_degree": -1.2,
        "indebtedness_per_capita": 1.0,
        "total_investment_financed_by_debt": 1.0,
        "rigid_expenditure": 1.2,
        "expense_management_speed": -1.0,
        "collecting_capacity": -1.2,
        "extra_budgetary_debts": 1.0,
        DELTA_PREFIX + "expense_management_speed": -0.3,
        DELTA_PREFIX + "rigid_expenditure": 0.8,
        DELTA_PREFIX + "total_investment_financed_by_debt": 0.3,
        DELTA_PREFIX + "financial_autonomy_degree": -0.5,
        DELTA_PREFIX + "collecting_capacity": -0.8,
        DELTA_PREFIX + "indebtedness_per_capita": 0.5,
        "off_balance_sheet_debts": 1.5,
    })
    for lv, v in zip(range(1, 13), np.linspace(0.2, -0.2, 12)):
        beta[level_name("demographic_category", lv)] = float(v)
    for area, v in zip(GEO_AREAS, (-0.15, -0.1, -0.05, 0.2, 0.1)):
        beta[level_name("geo_area", area)] = v
    for lv, v in zip(range(1, 6), (-0.45, -0.15, 0.1, 0.2, 0.3)):
        beta[level_name("bankruptcy_risk", lv)] = v
    return beta


@dataclass
class SynthConfig:
    n_municipalities: int = 7904
    years: tuple[int, int] = DEFAULT_YEARS
    target_prevalence: float = 416 / 39520
    seed: int = 0
    planted_coefficients: dict[str, float] | None = None
    noise_scale: float = 0.3
    regional_mix: dict[str, float] | None = None
    # minimum distance of every record from the planted hyperplane, in
    # reference-standardized feature units; None samples labels instead
    margin: float | None = None

    def coefficients(self) -> dict[str, float]:
        beta = dict.fromkeys(design_columns(), 0.0)
        given = default_coefficients() if self.planted_coefficients is None \
            else self.planted_coefficients
        unknown = sorted(set(given) - set(beta))
        if unknown:
            raise InvalidInputError(f"unknown planted coefficient(s): {', '.join(unknown)}")
        beta.update({k: float(v) for k, v in given.items()})
        return beta

    def mix(self) -> np.ndarray:
        mix = DEFAULT_REGIONAL_MIX if self.regional_mix is None else self.regional_mix
        unknown = sorted(set(mix) - set(GEO_AREAS))
        if unknown:
            raise InvalidInputError(f"unknown geo area(s) in regional mix: {', '.join(unknown)}")
        p = np.array([float(mix.get(a, 0.0)) for a in GEO_AREAS])
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise InvalidInputError("regional_mix must be non-negative and sum to 1")
        return p

    def validate(self) -> None:
        if self.n_municipalities < 1:
            raise InvalidInputError("n_municipalities must be positive")
        if self.years[0] > self.years[1] or self.years[0] <= ARCHIVE_FIRST_YEAR:
            raise InvalidInputError(f"invalid year range {self.years}")
        if not 0 < self.target_prevalence < 1:
            raise InvalidInputError("target_prevalence must lie in (0, 1)")
        if not self.noise_scale > 0:
            raise InvalidInputError("noise_scale must be positive")
        if self.margin is not None and self.margin < 0:
            raise InvalidInputError("margin must be non-negative")
        self.coefficients()
        self.mix()


@dataclass
class GroundTruth:
    coefficients: dict[str, float]
    intercept: float
    noise_scale: float
    margin: float | None
    reference_means: dict[str, float]
    reference_stds: dict[str, float]
    municipality_ids: np.ndarray
    years: np.ndarray
    log_odds: np.ndarray
    labels: np.ndarray
    expected_prevalence: float
    calibration_iterations: int
    n_margin_adjusted: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {"kind": "synthetic_ground_truth", "seed": self.seed,
                "planted_coefficients": self.coefficients, "intercept": self.intercept,
                "noise_scale": self.noise_scale, "margin": self.margin,
                "reference_means": self.reference_means, "reference_stds": self.reference_stds,
                "expected_prevalence": self.expected_prevalence,
                "calibration_iterations": self.calibration_iterations,
                "n_margin_adjusted": self.n_margin_adjusted,
                "records": {"municipality_id": [str(m) for m in self.municipality_ids],
                            "year": self.years.tolist(), "log_odds": self.log_odds.tolist(),
                            "label": self.labels.tolist()}}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    def strong_coefficients(self, factor: float = 2.0) -> dict[str, float]:
        """Planted coefficients with magnitude at least ``factor * noise_scale``."""
        return {k: v for k, v in self.coefficients.items()
                if abs(v) >= factor * self.noise_scale}


N_IND = len(NUMERIC_INDICATORS)
LAG_POS = [NUMERIC_INDICATORS.index(f) for f in LAGGED_INDICATORS]


def _draws(seed: int, n: int, T: int, n_past: int) -> dict[str, np.ndarray]:
    """All random inputs, one independent stream per municipality index."""
    n_u = 2 + 2 * T + 2 * n_past
    n_z = 2 + T + T * (N_IND + 1)
    U = np.empty((n, n_u))
    Z = np.empty((n, n_z))
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        U[i] = rng.random(n_u)
        Z[i] = rng.standard_normal(n_z)
    return {
        "geo": U[:, 0], "pop": U[:, 1],
        "pre": U[:, 2:2 + T], "label": U[:, 2 + T:2 + 2 * T],
        "past_pre": U[:, 2 + 2 * T:2 + 2 * T + n_past],
        "past_bank": U[:, 2 + 2 * T + n_past:],
        "h0": Z[:, 0], "drift": Z[:, 1], "step": Z[:, 2:2 + T],
        "eps": Z[:, 2 + T:2 + T + T * N_IND].reshape(n, T, N_IND),
        "ob": Z[:, 2 + T + T * N_IND:],
    }


class _Risk:
    """Running Table-style risk state per municipality."""

    def __init__(self, n):
        self.n_pre = np.zeros(n, dtype=int)
        self.n_bank = np.zeros(n, dtype=int)
        self.pre_then_bank = np.zeros(n, dtype=bool)

    def record(self, pre, bank):
        # within a year pre-distress precedes bankruptcy
        self.n_pre += pre
        self.pre_then_bank |= bank & (self.n_pre > 0)
        self.n_bank += bank

    def level(self) -> np.ndarray:
        return np.select([self.n_bank >= 2, self.pre_then_bank, self.n_bank == 1,
                          self.n_pre >= 2], [5, 4, 3, 2], 1)


@dataclass
class _World:
    ids: np.ndarray
    geo: np.ndarray  # index into GEO_AREAS
    population: np.ndarray
    category: np.ndarray
    x: np.ndarray  # n x T x N_IND, before margin adjustment
    off_balance: np.ndarray  # n x T
    pre_events: np.ndarray  # n x T panel-year pre-distress
    label_u: np.ndarray
    past_events: list
    risk0: _Risk
    scale: np.ndarray
    years: np.ndarray
    ref_mean: np.ndarray = field(default=None)
    ref_std: np.ndarray = field(default=None)


def _build_world(cfg: SynthConfig) -> _World:
    n = cfg.n_municipalities
    y0, y1 = cfg.years
    years = np.arange(y0, y1 + 1)
    T = len(years)
    past_years = np.arange(ARCHIVE_FIRST_YEAR, y0)
    d = _draws(cfg.seed, n, T, len(past_years))

    geo = np.minimum(np.searchsorted(np.cumsum(cfg.mix()), d["geo"], side="right"),
                     len(GEO_AREAS) - 1)
    population = np.rint(np.exp(np.log(100) + d["pop"] * (np.log(1e6) - np.log(100))))
    population = population.astype(np.int64)
    offset = np.array([REGIONAL_HEALTH[a] for a in GEO_AREAS])[geo]
    h_start = offset + d["h0"]
    h = h_start[:, None] + np.cumsum(DRIFT_SCALE * d["drift"][:, None]
                                     + HEALTH_STEP * d["step"], axis=1)

    base = np.array([INDICATOR_SHAPE[f][0] for f in NUMERIC_INDICATORS])
    scale = np.array([INDICATOR_SHAPE[f][1] for f in NUMERIC_INDICATORS])
    load = np.array([INDICATOR_SHAPE[f][2] for f in NUMERIC_INDICATORS])
    x = base + scale * (load * h[:, :, None] + cfg.noise_scale * d["eps"])
    off_balance = (-h + d["ob"] > OFF_BALANCE_CUT).astype(int)
    pre_events = d["pre"] < expit(-4.5 - 1.0 * h)

    risk0 = _Risk(n)
    past = []
    p_pre = expit(-5.0 - h_start)
    p_bank = expit(-6.0 - h_start)
    for j, yr in enumerate(past_years):
        pre = d["past_pre"][:, j] < p_pre
        bank = d["past_bank"][:, j] < p_bank
        risk0.record(pre, bank)
        past.extend((i, int(yr), PRE_DISTRESS) for i in np.flatnonzero(pre))
        past.extend((i, int(yr), BANKRUPTCY) for i in np.flatnonzero(bank))

    width = max(5, len(str(n - 1)))
    ids = np.array([f"M{i:0{width}d}" for i in range(n)], dtype=object)
    w = _World(ids, geo, population, category_codes(population), x, off_balance, pre_events,
               d["label"], past, risk0, scale, years)
    _clip(w.x)
    levels = w.x.reshape(-1, N_IND)
    deltas = np.concatenate([np.zeros((n, 1, len(LAG_POS))),
                             np.diff(w.x[:, :, LAG_POS], axis=1)], axis=1).reshape(-1, len(LAG_POS))
    ref = np.hstack([levels, deltas])
    w.ref_mean = ref.mean(axis=0)
    w.ref_std = ref.std(axis=0)
    w.ref_std[w.ref_std == 0] = 1.0
    return w


def _clip(x):
    for f in NONNEGATIVE:
        j = NUMERIC_INDICATORS.index(f)
        np.maximum(x[..., j], 0.0, out=x[..., j])


class _Planted:
    def __init__(self, beta: dict[str, float], w: _World):
        cols = design_columns()
        num = [*NUMERIC_INDICATORS, *(DELTA_PREFIX + f for f in LAGGED_INDICATORS)]
        self.b_num = np.array([beta[c] for c in num])
        self.b_ob = beta["off_balance_sheet_debts"]
        self.b_cat = np.array([beta[level_name("demographic_category", lv)] for lv in range(1, 13)])
        self.b_geo = np.array([beta[level_name("geo_area", a)] for a in GEO_AREAS])
        self.b_risk = np.array([beta[level_name("bankruptcy_risk", lv)] for lv in range(1, 6)])
        self.norm = float(np.linalg.norm([beta[c] for c in cols]))
        self.mean, self.std = w.ref_mean, w.ref_std
        self.static = self.b_cat[w.category - 1] + self.b_geo[w.geo]

    def score(self, x_t, delta_t, ob_t, risk_t) -> np.ndarray:
        z = (np.hstack([x_t, delta_t]) - self.mean) / self.std
        return z @ self.b_num + self.b_ob * ob_t + self.static + self.b_risk[risk_t - 1]

    def level_gradient(self, first_year: bool) -> np.ndarray:
        """d(score)/d(indicator level) at fixed previous-year values."""
        g = self.b_num[:N_IND] / self.std[:N_IND]
        if not first_year:
            g = g.copy()
            g[LAG_POS] += self.b_num[N_IND:] / self.std[N_IND:]
        return g


def _simulate(w: _World, planted: _Planted, intercept: float, margin: float | None):
    n, T, _ = w.x.shape
    x = w.x.copy()
    s = np.empty((n, T))
    y = np.zeros((n, T), dtype=int)
    risk = np.empty((n, T), dtype=int)
    state = _Risk(n)
    state.n_pre[:] = w.risk0.n_pre
    state.n_bank[:] = w.risk0.n_bank
    state.pre_then_bank[:] = w.risk0.pre_then_bank
    adjusted = 0
    for t in range(T):
        risk[:, t] = state.level()
        delta = x[:, t, LAG_POS] - x[:, t - 1, LAG_POS] if t else np.zeros((n, len(LAG_POS)))
        st = intercept + planted.score(x[:, t], delta, w.off_balance[:, t], risk[:, t])
        if margin:
            half = margin * planted.norm
            band = np.abs(st) < half
            if band.any():
                # move the noise along the score gradient to the nearer band edge
                a = planted.level_gradient(t == 0) * w.scale
                target = np.where(st[band] >= 0, half, -half) * (1 + 1e-9)
                tau = (target - st[band]) / (a @ a)
                x[band, t] += (tau[:, None] * a) * w.scale
                _clip(x[:, t])
                adjusted += int(band.sum())
                if t:
                    delta = x[:, t, LAG_POS] - x[:, t - 1, LAG_POS]
                st = intercept + planted.score(x[:, t], delta, w.off_balance[:, t], risk[:, t])
            y[:, t] = st >= 0
        else:
            y[:, t] = w.label_u[:, t] < expit(st)
        s[:, t] = st
        state.record(w.pre_events[:, t], y[:, t].astype(bool))
    return x, s, y, risk, adjusted


def _expected(s, y, margin) -> float:
    return float(y.mean()) if margin else float(expit(s).mean())


def calibrate_intercept(w: _World, planted: _Planted, target: float, margin: float | None):
    """Bisection on the intercept until expected prevalence is within 2% of target."""
    lo, hi = BISECT_BOUNDS
    for bound in (lo, hi):
        res = _simulate(w, planted, bound, margin)
        e = _expected(res[1], res[2], margin)
        if abs(e - target) <= CALIBRATION_TOL * target:
            return bound, res, e, 0
        if (bound == lo and e > target) or (bound == hi and e < target):
            raise CalibrationError(
                f"target prevalence {target:.6g} unreachable: intercept {bound} gives {e:.6g}")
    for it in range(1, BISECT_ITERS + 1):
        mid = 0.5 * (lo + hi)
        res = _simulate(w, planted, mid, margin)
        e = _expected(res[1], res[2], margin)
        if abs(e - target) <= CALIBRATION_TOL * target:
            return mid, res, e, it
        if e < target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"intercept bisection did not reach prevalence {target:.6g} "
                           f"within {BISECT_ITERS} iterations (last {e:.6g})")


def generate(cfg: SynthConfig = SynthConfig()) -> tuple[Panel, DistressArchive, GroundTruth]:
    cfg.validate()
    w = _build_world(cfg)
    beta = cfg.coefficients()
    planted = _Planted(beta, w)
    b, (x, s, y, risk, adjusted), expected, iters = calibrate_intercept(
        w, planted, cfg.target_prevalence, cfg.margin)
    n, T, _ = x.shape

    frame = pd.DataFrame({
        "municipality_id": np.repeat(w.ids, T),
        "year": np.tile(w.years, n).astype(np.int64),
        "population": np.repeat(w.population, T),
        "geo_area": np.repeat(np.array(GEO_AREAS, dtype=object)[w.geo], T),
        **{f: x[:, :, j].ravel() for j, f in enumerate(NUMERIC_INDICATORS)},
        "off_balance_sheet_debts": w.off_balance.ravel().astype(np.int64),
        "demographic_category": np.repeat(w.category, T).astype(np.int64),
        "bankruptcy_risk": risk.ravel().astype(np.int64),
        "label": y.ravel().astype(np.int64),
    }, columns=list(PANEL_FRAME_COLUMNS))
    panel = Panel(frame, tuple(cfg.years))

    events = [(w.ids[i], yr, kind) for i, yr, kind in w.past_events]
    for t, yr in enumerate(w.years):
        events.extend((w.ids[i], int(yr), PRE_DISTRESS) for i in np.flatnonzero(w.pre_events[:, t]))
        events.extend((w.ids[i], int(yr), BANKRUPTCY) for i in np.flatnonzero(y[:, t]))
    archive = DistressArchive(tuple(sorted(events)))

    ref_names = [*NUMERIC_INDICATORS, *(DELTA_PREFIX + f for f in LAGGED_INDICATORS)]
    truth = GroundTruth(beta, float(b), cfg.noise_scale, cfg.margin,
                        dict(zip(ref_names, w.ref_mean.tolist())),
                        dict(zip(ref_names, w.ref_std.tolist())),
                        frame["municipality_id"].to_numpy(), frame["year"].to_numpy(),
                        s.ravel(), y.ravel(), expected, iters, adjusted, cfg.seed)
    return panel, archive, truth
