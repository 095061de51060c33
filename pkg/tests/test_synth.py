import numpy as np
import pandas as pd
import pytest

from munidistress.domain import CalibrationError, InvalidInputError, validate_record
from munidistress.features import design_columns
from munidistress.ingest import (merge_panel, parse_distress_archive, parse_financial_panel,
                                 write_archive_csv, write_panel_csv)
from munidistress.synth import SynthConfig, generate


@pytest.fixture(scope="module")
def default_world():
    return generate(SynthConfig())


def test_default_shape(default_world):
    panel, _, truth = default_world
    assert len(panel) == 39520
    assert 375 <= panel.n_positive <= 458
    assert abs(truth.expected_prevalence - 416 / 39520) <= 0.02 * 416 / 39520


def test_zero_coefficients_half_prevalence():
    zero = dict.fromkeys(design_columns(), 0.0)
    _, _, truth = generate(SynthConfig(n_municipalities=2000, target_prevalence=0.5,
                                       planted_coefficients=zero, seed=3))
    assert truth.intercept == pytest.approx(0.0, abs=0.1)
    assert truth.labels.mean() == pytest.approx(0.5, abs=0.03)


def test_same_seed_same_world():
    cfg = SynthConfig(n_municipalities=300, target_prevalence=0.05, seed=8)
    a, b = generate(cfg), generate(cfg)
    pd.testing.assert_frame_equal(a[0].frame, b[0].frame)
    assert a[1].events == b[1].events
    np.testing.assert_array_equal(a[2].log_odds, b[2].log_odds)
    c = generate(SynthConfig(n_municipalities=300, target_prevalence=0.05, seed=9))
    assert not a[0].frame.equals(c[0].frame)


def test_municipalities_are_independent_streams():
    # a municipality's draws do not depend on how many follow it
    small = generate(SynthConfig(n_municipalities=50, target_prevalence=0.05, seed=4))[0].frame
    big = generate(SynthConfig(n_municipalities=80, target_prevalence=0.05, seed=4))[0].frame
    cols = ["population", "geo_area", "off_balance_sheet_debts"]
    pd.testing.assert_frame_equal(small[cols], big[cols].iloc[:len(small)])


def test_every_record_valid(small_synth):
    panel = small_synth[0]
    bad = [p for r in panel.records() for p in validate_record(r, panel.year_range)]
    assert bad == []


def test_csv_round_trip_exact(tmp_path, small_synth):
    panel, archive, _ = small_synth
    write_panel_csv(panel, tmp_path / "p.csv")
    write_archive_csv(archive, tmp_path / "a.csv")
    again = merge_panel(parse_financial_panel(tmp_path / "p.csv"),
                        parse_distress_archive(tmp_path / "a.csv"), panel.year_range)
    pd.testing.assert_frame_equal(again.frame, panel.frame)


def test_labels_agree_with_archive(small_synth):
    panel, _, truth = small_synth
    np.testing.assert_array_equal(truth.labels, panel.frame["label"].to_numpy())


def test_unreachable_prevalence():
    harsh = {"indebtedness_per_capita": -1000.0, "rigid_expenditure": -1000.0}
    with pytest.raises(CalibrationError):
        generate(SynthConfig(n_municipalities=200, target_prevalence=0.9,
                             planted_coefficients=harsh, seed=1))


def test_margin_mode_keeps_records_off_the_band():
    panel, _, truth = generate(SynthConfig(n_municipalities=600, target_prevalence=0.05,
                                           seed=11, margin=0.9))
    norm = np.linalg.norm(list(truth.coefficients.values()))
    np.testing.assert_array_equal(truth.labels, (truth.log_odds >= 0).astype(int))
    assert np.all(np.abs(truth.log_odds) >= 0.9 * norm * (1 - 1e-8))
    assert truth.n_margin_adjusted > 0


@pytest.mark.parametrize("kw", [{"target_prevalence": 1.0}, {"noise_scale": 0.0},
                                {"regional_mix": {"south": 0.5}}, {"n_municipalities": 0},
                                {"planted_coefficients": {"nonsense": 1.0}},
                                {"margin": -1.0}])
def test_invalid_configs(kw):
    with pytest.raises(InvalidInputError):
        generate(SynthConfig(**kw))


def test_ground_truth_sidecar(tmp_path, small_synth):
    import json
    truth = small_synth[2]
    truth.write(tmp_path / "g.json")
    d = json.loads((tmp_path / "g.json").read_text())
    assert d["intercept"] == truth.intercept
    assert len(d["records"]["log_odds"]) == len(truth.log_odds)
    assert set(truth.strong_coefficients()) <= set(truth.coefficients)
