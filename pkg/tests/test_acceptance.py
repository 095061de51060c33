"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line."""

import time

import numpy as np
import pandas as pd
import pytest

from munidistress.analysis import forward_fp_analysis
from munidistress.cli import main
from munidistress.evaluation import (ConfusionMatrix, expand_grid, metrics, pr_curve, roc_curve,
                                     stratified_kfold, stratified_split)
from munidistress.features import (FeatureMatrix, apply_standardizer, build_features, fit_pca,
                                   fit_standardizer, project)
from munidistress.ingest import (merge_panel, parse_distress_archive, parse_financial_panel,
                                 write_archive_csv, write_panel_csv)
from munidistress.models import class_weights, predict_scores, train_model
from munidistress.models.io import dumps, loads
from munidistress.models.logistic import gradient, objective
from munidistress.pipeline import PipelineConfig, run_pipeline
from munidistress.synth import SynthConfig, generate

from conftest import forward_fixture, record_criterion
from oracles import enumerated_ap, pair_auc, quota_ok, random_instance

N_SEEDS = 20


@pytest.fixture(scope="module")
def default_world():
    return generate(SynthConfig())


def test_c01_metric_oracles():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_roc = worst_ap = 0.0
    for _ in range(200):
        y, s = random_instance(rng, 100)
        worst_roc = max(worst_roc, abs(roc_curve(y, s).auc - pair_auc(y, s)))
        worst_ap = max(worst_ap, abs(pr_curve(y, s).auc - enumerated_ap(y, s)))
    elapsed = time.perf_counter() - t0
    ok = worst_roc <= 1e-12 and worst_ap <= 1e-12 and elapsed < 5
    assert record_criterion(1, ok, f"max |auc - oracle| {worst_roc:.1e}, max |ap - oracle| "
                                   f"{worst_ap:.1e}, {elapsed:.2f}s")


def test_c02_gradient_check():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    h = 1e-6
    for _ in range(50):
        X = rng.normal(size=(10, 5))
        y = rng.integers(0, 2, 10)
        y[:2] = (0, 1)
        sw = class_weights(y).per_row(y)
        C = float(rng.uniform(0.1, 10))
        theta = rng.normal(size=6)
        g = gradient(theta, X, y, sw, "l2", C)
        fd = np.array([(objective(theta + h * e, X, y, sw, "l2", C)
                        - objective(theta - h * e, X, y, sw, "l2", C)) / (2 * h)
                       for e in np.eye(6)])
        worst = max(worst, np.max(np.abs(g - fd)) / np.max(np.abs(g)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 5
    assert record_criterion(2, ok, f"max relative error {worst:.2e}, {elapsed:.2f}s")


def test_c03_confusion_arithmetic():
    m = metrics(ConfusionMatrix(tp=67, fn=0, fp=420, tn=7215))
    p, r, f = m.positive.precision, m.positive.recall, m.positive.f1
    ok = abs(p - 0.1376) <= 1e-4 and r == 1.0 and abs(f - 0.2419) <= 1e-4
    assert record_criterion(3, ok, f"precision {p:.4f}, recall {r:.4f}, F1 {f:.4f}")


def test_c04_stratification():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    bad = checked = 0
    for i in range(500):
        n = int(rng.integers(40, 400))
        y = (rng.random(n) < rng.uniform(0.05, 0.5)).astype(int)
        y[:10], y[10:20] = 1, 0
        for k in range(2, 11):
            folds = stratified_kfold(y, k, seed=i)
            for c in (0, 1):
                checked += 1
                bad += not quota_ok([int(np.sum(y[f] == c)) for f in folds],
                                    int(np.sum(y == c)), k)
        tr, te = stratified_split(y, 0.8, seed=i)
        for c in (0, 1):
            checked += 1
            n_c = int(np.sum(y == c))
            bad += abs(int(np.sum(y[tr] == c)) - 0.8 * n_c) >= 1
        bad += len(np.intersect1d(tr, te)) != 0 or len(tr) + len(te) != n
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 10
    assert record_criterion(4, ok, f"{bad} quota violations in {checked} checks, {elapsed:.2f}s")


def test_c05_grid_cardinalities():
    sizes = {f: len(expand_grid(f)) for f in ("logistic", "svm", "forest", "gbt")}
    ok = sizes == {"logistic": 10, "svm": 20, "forest": 36, "gbt": 36}
    assert record_criterion(5, ok, f"{sizes}")


def test_c06_desk_scale_replication(default_world):
    t0 = time.perf_counter()
    panel, _, _ = default_world
    res = run_pipeline(panel, PipelineConfig(seed=0))
    elapsed = time.perf_counter() - t0
    ev = res.evaluation
    realized = res.test.labels.sum() / len(res.test)
    shape_ok = (len(panel) == 39520 and abs(panel.n_positive - 416) <= 41.6
                and len(res.search.candidates) == 10)
    baseline_ok = ev.pr.baseline == realized and ev.to_dict()["test_prevalence"] == realized

    zero_fn = 0
    for seed in range(N_SEEDS):
        p, _, _ = generate(SynthConfig(seed=seed, margin=3 * 0.3))
        r = run_pipeline(p, PipelineConfig(seed=seed, threshold=0.5))
        zero_fn += r.evaluation.confusion.fn == 0
    ok = shape_ok and baseline_ok and elapsed < 600 and zero_fn >= 18
    assert record_criterion(6, ok, f"{len(panel)} records, {panel.n_positive} positive, "
                                   f"pipeline {elapsed:.1f}s, baseline {ev.pr.baseline:.6f} vs "
                                   f"realized {realized:.6f}, FN=0 in {zero_fn}/{N_SEEDS} seeds")


def test_c07_planted_sign_recovery():
    t0 = time.perf_counter()
    recovered = 0
    misses = []
    for seed in range(N_SEEDS):
        panel, _, truth = generate(SynthConfig(seed=seed))
        fm, _ = build_features(panel)
        std = fit_standardizer(fm)
        model = train_model("logistic", apply_standardizer(std, fm), class_weights(fm.labels),
                            {"penalty": "l2", "C": 5.0})
        fitted = dict(zip(model.column_names, model.coefficients))
        wrong = [k for k, v in truth.strong_coefficients().items()
                 if np.sign(fitted[k]) != np.sign(v)]
        recovered += not wrong
        misses.extend(wrong)
    elapsed = time.perf_counter() - t0
    ok = recovered >= 0.95 * N_SEEDS and elapsed < 300
    assert record_criterion(7, ok, f"all strong signs recovered in {recovered}/{N_SEEDS} seeds, "
                                   f"misses {sorted(set(misses)) or 'none'}, {elapsed:.1f}s")


def test_c08_forward_fp_fixture():
    model, test, panel = forward_fixture(10, 3)
    rep = forward_fp_analysis(model, test, panel, 2016, 4)
    ok = rep.n_false_positive == 10 and rep.fraction_later_distressed == 0.3
    assert record_criterion(8, ok, f"{rep.n_fp_later_distressed}/{rep.n_false_positive} "
                                   f"-> fraction {rep.fraction_later_distressed}")


def test_c09_pca_identities(default_world):
    fm, _ = build_features(default_world[0])
    scaled = apply_standardizer(fit_standardizer(fm), fm)
    d = len(scaled.column_names)
    pca = fit_pca(scaled, d)
    ratio_err = abs(pca.explained_variance_ratio.sum() - 1)
    var_err = np.max(np.abs(project(pca, scaled).var(axis=0, ddof=1) - pca.explained_variance))
    t = np.random.default_rng(3).normal(size=200)
    line = np.outer(t, [1.0, -2.0, 0.5])
    X = FeatureMatrix(line, ["a", "b", "c"], np.array(["A"] * 200, dtype=object),
                      np.arange(200), np.zeros(200, int))
    rank1_err = abs(fit_pca(X, 3).explained_variance_ratio[0] - 1)
    ok = ratio_err <= 1e-9 and var_err <= 1e-9 and rank1_err <= 1e-9
    assert record_criterion(9, ok, f"ratio sum error {ratio_err:.1e}, variance error "
                                   f"{var_err:.1e}, rank-1 error {rank1_err:.1e}")


def test_c10_determinism(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "data"), "--seed", "0"]) == 0
    flags = ["--panel", str(tmp_path / "data" / "panel.csv"),
             "--archive", str(tmp_path / "data" / "archive.csv"), "--seed", "0"]
    runs = []
    for name, jobs in (("serial", "1"), ("parallel", "4")):
        assert main(["evaluate", *flags, "--out", str(tmp_path / name), "--jobs", jobs]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    differing = sorted(k for k in runs[0] if runs[0][k] != runs[1].get(k))
    ok = runs[0].keys() == runs[1].keys() and not differing
    assert record_criterion(10, ok, f"{len(runs[0])} report files, jobs 1 vs 4, "
                                    f"differing: {differing or 'none'}")


def test_c11_round_trips(default_world, tmp_path):
    panel, archive, _ = default_world
    fm, _ = build_features(panel)
    std = fit_standardizer(fm)
    scaled = apply_standardizer(std, fm)
    sample = scaled.subset(np.arange(0, len(fm), 7))
    params = {"logistic": {"penalty": "l1", "C": 1.0},
              "svm": {"kernel": "rbf", "C": 1.0, "gamma": 0.01},
              "forest": {"n_trees": 10, "max_depth": 5, "min_samples_split": 5},
              "gbt": {"n_estimators": 20, "max_depth": 3, "learning_rate": 0.1}}
    exact = {}
    for family, p in params.items():
        model = train_model(family, sample, class_weights(sample.labels), p, seed=1)
        back, _, _ = loads(dumps(model, std))
        exact[family] = np.array_equal(predict_scores(model, scaled), predict_scores(back, scaled))

    write_panel_csv(panel, tmp_path / "p.csv")
    write_archive_csv(archive, tmp_path / "a.csv")
    again = merge_panel(parse_financial_panel(tmp_path / "p.csv"),
                        parse_distress_archive(tmp_path / "a.csv"), panel.year_range)
    try:
        pd.testing.assert_frame_equal(again.frame, panel.frame)
        panel_ok = True
    except AssertionError:
        panel_ok = False
    ok = all(exact.values()) and panel_ok
    assert record_criterion(11, ok, f"bit-exact predictions {exact}, panel round trip "
                                    f"{'exact' if panel_ok else 'differs'}")
