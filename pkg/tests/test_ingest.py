
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from munidistress.domain import (BANKRUPTCY, PRE_DISTRESS, DistressArchive,
                                 EmptyDatasetError, ParseError, SchemaError)
from munidistress.ingest import (clean, load_panel, merge_panel,
                                 parse_distress_archive, parse_financial_panel,
                                 write_archive_csv, write_panel_csv)

from conftest import archive_text, panel_text


def three_rows():
    return panel_text([{"year": 2016}, {"year": 2017}, {"year": 2018}])


def test_valid_rows_pass_through():
    parsed = parse_financial_panel(three_rows())
    assert len(parsed.frame) == 3
    assert parsed.diagnostics == []


def test_missing_column_is_schema_error():
    text = three_rows().decode().replace("population", "residents").encode()
    with pytest.raises(SchemaError, match="population"):
        parse_financial_panel(text)


def test_missing_value_flagged_and_kept():
    text = panel_text([{"year": 2016}, {"year": 2017, "rigid_expenditure": "n/a"},
                       {"year": 2018}, {"year": 2019}])
    parsed = parse_financial_panel(text)
    assert len(parsed.frame) == 4
    [d] = parsed.diagnostics
    assert (d.line, d.kind, d.message) == (3, "missing-value", "rigid_expenditure")
    assert np.isnan(parsed.frame.loc[1, "rigid_expenditure"])


def test_malformed_rows_reported_with_line_numbers():
    text = panel_text([{"year": 2016}, {"year": "20x7"}, {"population": "many"}]).decode()
    text += "B,2016,3\n"
    parsed = parse_financial_panel(text.encode())
    assert len(parsed.frame) == 1
    assert [(d.line, d.kind) for d in parsed.diagnostics] == [
        (3, "malformed"), (4, "malformed"), (5, "malformed")]


def test_schema_mapping_and_delimiter():
    text = three_rows().decode().replace("geo_area", "area").replace(",", ";").encode()
    parsed = parse_financial_panel(text, schema={"geo_area": "area"}, delimiter=";")
    assert list(parsed.frame["geo_area"]) == ["south"] * 3


def test_archive_dedup_and_1989():
    arch = parse_distress_archive(archive_text([("A", 1989, "bankruptcy"),
                                                ("A", 1989, "bankruptcy"),
                                                ("A", 2000, "Pre-Distress")]))
    assert arch.events == (("A", 1989, BANKRUPTCY), ("A", 2000, PRE_DISTRESS))


def test_archive_unknown_kind():
    with pytest.raises(ParseError, match="liquidation"):
        parse_distress_archive(archive_text([("A", 2017, "liquidation")]))


def merged(rows, events, year_range=(2016, 2020)):
    return merge_panel(parse_financial_panel(panel_text(rows)), DistressArchive(tuple(events)),
                       year_range)


def test_label_marks_bankruptcy_year():
    p = merged([{"year": y} for y in (2017, 2018)], [("A", 2018, BANKRUPTCY)])
    assert list(p.frame["label"]) == [0, 1]


def test_risk_uses_only_past_events():
    p = merged([{"year": y} for y in range(2016, 2021)],
               [("A", 2010, PRE_DISTRESS), ("A", 2017, BANKRUPTCY)])
    assert list(p.frame["bankruptcy_risk"]) == [1, 1, 4, 4, 4]
    assert list(p.frame["label"]) == [0, 1, 0, 0, 0]


def test_same_year_pre_distress_precedes_bankruptcy():
    p = merged([{"year": 2018}], [("A", 2017, BANKRUPTCY), ("A", 2017, PRE_DISTRESS)])
    assert p.frame["bankruptcy_risk"].iloc[0] == 4


def test_empty_archive():
    p = merged([{"year": y} for y in (2016, 2017)], [])
    assert p.frame["label"].eq(0).all() and p.frame["bankruptcy_risk"].eq(1).all()


def test_out_of_range_rows_counted():
    p = merged([{"year": 2015}, {"year": 2016}, {"year": 2021}], [])
    assert len(p) == 1
    _, report = clean(p)
    assert report.out_of_range_dropped == 2
    assert report.rows_read == report.rows_kept + report.n_dropped


def test_unknown_archive_municipality_warns():
    diags = []
    merge_panel(parse_financial_panel(three_rows()),
                DistressArchive((("Z", 2017, BANKRUPTCY),)), diagnostics=diags)
    assert [d.kind for d in diags] == ["warning"]


def test_merge_idempotent(small_synth):
    panel, archive, _ = small_synth
    again = merge_panel(panel.frame, archive, panel.year_range)
    pd.testing.assert_series_equal(again.frame["label"], panel.frame["label"])
    pd.testing.assert_series_equal(again.frame["bankruptcy_risk"], panel.frame["bankruptcy_risk"])


def test_label_conservation(small_synth):
    panel, archive, _ = small_synth
    keys = set(zip(panel.frame["municipality_id"], panel.frame["year"]))
    n_events = sum(1 for m, y, k in archive.events if k == BANKRUPTCY and (m, y) in keys)
    assert panel.n_positive == n_events


def test_duplicates_removed_keep_first():
    p = merged([{"year": 2016, "rigid_expenditure": 1}, {"year": 2016, "rigid_expenditure": 2}],
               [])
    cleaned, report = clean(p)
    assert report.duplicates_removed == 1
    assert cleaned.frame["rigid_expenditure"].tolist() == [1.0]


def test_median_imputation():
    p = merged([{"year": 2016, "collecting_capacity": 10}, {"year": 2017, "collecting_capacity": 20},
                {"year": 2018, "collecting_capacity": 30}, {"year": 2019, "collecting_capacity": "NA"}],
               [])
    cleaned, report = clean(p)
    assert cleaned.frame["collecting_capacity"].iloc[3] == 20.0
    assert report.values_imputed == {"collecting_capacity": 1}


def test_all_labels_missing_is_empty():
    p = merged([{"year": 2016}, {"year": 2017}], [])
    p.frame["label"] = np.nan
    with pytest.raises(EmptyDatasetError):
        clean(p)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(2016, 2020),
                          st.one_of(st.none(), st.floats(0, 100))), min_size=1, max_size=25))
def test_clean_changes_only_reported_values(rows):
    rows = [(9, 2016, 1.0)] + rows  # guarantees one observed value to impute from
    table = [{"municipality_id": f"M{m}", "year": y,
             "collecting_capacity": "NA" if v is None else v} for m, y, v in rows]
    p = merged(table, [])
    cleaned, report = clean(p)
    before = p.frame.drop_duplicates(["municipality_id", "year"], keep="first").reset_index(drop=True)
    assert report.duplicates_removed == len(p) - len(before)
    changed = before["collecting_capacity"].isna()
    assert report.values_imputed.get("collecting_capacity", 0) == int(changed.sum())
    same = ~changed
    np.testing.assert_array_equal(cleaned.frame.loc[same, "collecting_capacity"],
                                  before.loc[same, "collecting_capacity"])
    assert report.rows_read == report.rows_kept + report.n_dropped


def test_csv_round_trip(tmp_path, small_synth):
    panel, archive, _ = small_synth
    write_panel_csv(panel, tmp_path / "p.csv")
    write_archive_csv(archive, tmp_path / "a.csv")
    loaded, report, arch = load_panel(tmp_path / "p.csv", tmp_path / "a.csv", panel.year_range)
    pd.testing.assert_frame_equal(loaded.frame, panel.frame)
    assert set(arch.events) == set(archive.events)
    assert report.rows_dropped == {}


def test_column_without_observations_rejected():
    p = merged([{"year": 2016, "collecting_capacity": "NA"}], [])
    with pytest.raises(EmptyDatasetError, match="collecting_capacity"):
        clean(p)
