import io

import numpy as np
import pytest

from munidistress.domain import PANEL_COLUMNS
from munidistress.synth import SynthConfig, generate

HEADER = ",".join(PANEL_COLUMNS)


def panel_text(rows):
    """CSV text with the panel header; each row is a dict of overrides."""
    base = {"municipality_id": "A", "year": 2016, "population": 1200, "geo_area": "south",
            "incidence_of_investment": 20, "financial_autonomy_degree": 55,
            "indebtedness_per_capita": 800, "total_investment_financed_by_debt": 30,
            "rigid_expenditure": 40, "expense_management_speed": 70,
            "collecting_capacity": 75, "extra_budgetary_debts": 10,
            "off_balance_sheet_debts": 0}
    lines = [HEADER]
    for r in rows:
        rec = {**base, **r}
        lines.append(",".join(str(rec[c]) for c in PANEL_COLUMNS))
    return ("\n".join(lines) + "\n").encode()


def archive_text(events):
    lines = ["municipality_id,year,event_kind"]
    lines += [f"{m},{y},{k}" for m, y, k in events]
    return io.BytesIO(("\n".join(lines) + "\n").encode())


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthConfig(n_municipalities=600, target_prevalence=0.05, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def forward_fixture(n_fp, n_later, n_tp=2, n_tn=3, anchor=2016, later_year=2018):
    """One-column world scored by x >= 0 at the anchor year.

    Returns (model, test matrix, panel). The first ``n_later`` false-positive
    municipalities get a bankruptcy at ``later_year``; true positives go
    bankrupt at the anchor year itself.
    """
    from munidistress.domain import BANKRUPTCY, DistressArchive
    from munidistress.features import FeatureMatrix
    from munidistress.ingest import merge_panel, parse_financial_panel
    from munidistress.models import LogisticModel

    ids = [f"F{i:03d}" for i in range(n_fp)] + [f"T{i:03d}" for i in range(n_tp)] + \
        [f"N{i:03d}" for i in range(n_tn)]
    x = np.r_[np.ones(n_fp + n_tp), -np.ones(n_tn)]
    labels = np.r_[np.zeros(n_fp), np.ones(n_tp), np.zeros(n_tn)].astype(int)
    events = [(ids[i], later_year, BANKRUPTCY) for i in range(n_later)]
    events += [(ids[n_fp + i], anchor, BANKRUPTCY) for i in range(n_tp)]
    rows = [{"municipality_id": m, "year": y} for m in ids for y in range(anchor, anchor + 5)]
    panel = merge_panel(parse_financial_panel(panel_text(rows)), DistressArchive(tuple(events)),
                        (anchor, anchor + 4))
    test = FeatureMatrix(x[:, None], ["x"], np.array(ids, dtype=object),
                         np.full(len(ids), anchor), labels)
    model = LogisticModel(np.array([1.0]), 0.0, "l2", 1.0, ("x",))
    return model, test, panel


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
