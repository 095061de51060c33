import numpy as np
import pytest

from munidistress.analysis import coefficient_report, forward_fp_analysis
from munidistress.domain import InvalidInputError, UnsupportedModelError
from munidistress.evaluation import stratified_split
from munidistress.features import apply_standardizer, build_features, fit_standardizer
from munidistress.models import LogisticModel, class_weights, train_model

from conftest import forward_fixture


def test_three_of_ten_false_positives():
    model, test, panel = forward_fixture(10, 3)
    rep = forward_fp_analysis(model, test, panel, 2016, 4)
    assert (rep.n_false_positive, rep.n_fp_later_distressed) == (10, 3)
    assert rep.fraction_later_distressed == 0.3
    assert rep.n_true_positive == 2 and rep.n_evaluated == 15
    assert sorted(d["first_later_distress_year"] for d in rep.detail
                  if d["first_later_distress_year"]) == [2018] * 3


def test_seventy_two_of_one_seventeen():
    model, test, panel = forward_fixture(117, 72, n_tp=13)
    rep = forward_fp_analysis(model, test, panel, 2016)
    assert rep.fraction_later_distressed == pytest.approx(0.615, abs=5e-4)


def test_no_false_positives_is_flagged():
    model, test, panel = forward_fixture(0, 0)
    rep = forward_fp_analysis(model, test, panel, 2016)
    assert rep.fraction_later_distressed == 0.0 and rep.degenerate


def test_events_beyond_horizon_ignored():
    model, test, panel = forward_fixture(10, 3, later_year=2019)
    assert forward_fp_analysis(model, test, panel, 2016, 2).n_fp_later_distressed == 0
    assert forward_fp_analysis(model, test, panel, 2016, 3).n_fp_later_distressed == 3


def test_anchor_labels_never_count():
    # true positives are distressed at the anchor year only
    model, test, panel = forward_fixture(4, 0, n_tp=5)
    rep = forward_fp_analysis(model, test, panel, 2016)
    assert rep.n_fp_later_distressed == 0
    assert rep.n_true_positive + rep.n_false_positive == int((test.X[:, 0] >= 0).sum())


def test_censoring_reported():
    model, test, panel = forward_fixture(5, 1)
    panel.frame.drop(panel.frame.index[(panel.frame["municipality_id"] == "F004")
                                       & (panel.frame["year"] == 2020)], inplace=True)
    rep = forward_fp_analysis(model, test, panel, 2016)
    assert rep.n_fp_censored == 1
    assert rep.to_dict()["coverage"]["window"] == [2017, 2020]


def test_missing_anchor_year():
    model, test, panel = forward_fixture(3, 1)
    with pytest.raises(InvalidInputError):
        forward_fp_analysis(model, test, panel, 2015)


def test_zero_coefficient_report():
    m = LogisticModel(np.zeros(3), 0.0, "l2", 1.0, ("b", "a=1", "a=2"))
    rep = coefficient_report(m)
    assert rep.entries == [("b", 0.0), ("a=1", 0.0), ("a=2", 0.0)]
    assert rep.groups == {"a": ["a=1", "a=2"]}


def test_report_needs_logistic(small_synth):
    fm, _ = build_features(small_synth[0])
    forest = train_model("forest", fm, None, {"n_trees": 2, "max_depth": 2,
                                              "min_samples_split": 2})
    with pytest.raises(UnsupportedModelError):
        coefficient_report(forest)


def test_report_is_sorted_permutation(small_synth):
    fm, _ = build_features(small_synth[0])
    tr, _ = stratified_split(fm, 0.8, 0)
    train = fm.subset(tr)
    std = fit_standardizer(train)
    model = train_model("logistic", apply_standardizer(std, train), class_weights(train.labels))
    rep = coefficient_report(model)
    values = [v for _, v in rep.entries]
    assert values == sorted(values, reverse=True)
    assert sorted(values) == sorted(model.coefficients.tolist())
    assert dict(rep.entries)["off_balance_sheet_debts"] > 0
