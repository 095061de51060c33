"""Core domain types for municipality-year distress records."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd


class DistressError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(DistressError, ValueError):
    pass


class SchemaError(InvalidInputError):
    pass


class ParseError(InvalidInputError):
    pass


class EmptyDatasetError(InvalidInputError):
    pass


class CalibrationError(DistressError):
    pass


class UnsupportedModelError(InvalidInputError):
    pass


DEFAULT_YEARS = (2016, 2020)
ARCHIVE_FIRST_YEAR = 1989

# lower bounds of the 12 demographic categories (residents), half-open intervals
CATEGORY_LOWER_BOUNDS = (0, 500, 1000, 2000, 3000, 5000, 10000, 20000,
                         60000, 100000, 250000, 500000)
CATEGORY_LABELS = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX",
                   "X", "XI", "XII")

GEO_AREAS = ("north-west", "north-east", "center", "south", "islands")
RISK_LEVELS = (1, 2, 3, 4, 5)
RISK_NAMES = {1: "low", 2: "medium-low", 3: "medium", 4: "medium-high", 5: "high"}

PRE_DISTRESS = "pre-distress"
BANKRUPTCY = "bankruptcy"
EVENT_KINDS = (PRE_DISTRESS, BANKRUPTCY)

# continuous indicators, in schema order
NUMERIC_INDICATORS = (
    "incidence_of_investment",
    "financial_autonomy_degree",
    "indebtedness_per_capita",
    "total_investment_financed_by_debt",
    "rigid_expenditure",
    "expense_management_speed",
    "collecting_capacity",
    "extra_budgetary_debts",
)
BINARY_INDICATORS = ("off_balance_sheet_debts",)
LAGGED_INDICATORS = (
    "expense_management_speed",
    "rigid_expenditure",
    "total_investment_financed_by_debt",
    "financial_autonomy_degree",
    "collecting_capacity",
    "indebtedness_per_capita",
)
CATEGORICAL_FIELDS = ("demographic_category", "geo_area", "bankruptcy_risk")
PERCENT_FIELDS = tuple(f for f in NUMERIC_INDICATORS
                       if f not in ("indebtedness_per_capita", "extra_budgetary_debts"))

PANEL_COLUMNS = ("municipality_id", "year", "population", "geo_area") \
    + NUMERIC_INDICATORS + BINARY_INDICATORS
ARCHIVE_COLUMNS = ("municipality_id", "year", "event_kind")


class DemographicCategory(Enum):
    I = 1
    II = 2
    III = 3
    IV = 4
    V = 5
    VI = 6
    VII = 7
    VIII = 8
    IX = 9
    X = 10
    XI = 11
    XII = 12

    @property
    def lower(self) -> int:
        return CATEGORY_LOWER_BOUNDS[self.value - 1]

    @property
    def upper(self) -> float:
        if self.value == 12:
            return math.inf
        return CATEGORY_LOWER_BOUNDS[self.value]


class GeoArea(Enum):
    NORTH_WEST = "north-west"
    NORTH_EAST = "north-east"
    CENTER = "center"
    SOUTH = "south"
    ISLANDS = "islands"


class BankruptcyRisk(Enum):
    LOW = 1
    MEDIUM_LOW = 2
    MEDIUM = 3
    MEDIUM_HIGH = 4
    HIGH = 5


def demographic_category_of(population: float) -> DemographicCategory:
    """Map a resident count to its demographic category I..XII."""
    if not population >= 1:
        raise InvalidInputError(f"population must be >= 1, got {population!r}")
    idx = bisect.bisect_right(CATEGORY_LOWER_BOUNDS, population) - 1
    return DemographicCategory(idx + 1)


def category_codes(population: np.ndarray) -> np.ndarray:
    """Vectorised demographic_category_of returning integer levels 1..12."""
    population = np.asarray(population, dtype=float)
    if np.any(~(population >= 1)):
        raise InvalidInputError("population must be >= 1")
    return np.searchsorted(CATEGORY_LOWER_BOUNDS, population, side="right").astype(int)


def bankruptcy_risk_of(history: Iterable[str]) -> BankruptcyRisk:
    """Risk level from a chronologically ordered list of distress events.

    The most severe matching rule wins (5 > 4 > 3 > 2 > 1).
    """
    n_pre = n_bank = 0
    pre_then_bank = False
    for event in history:
        if event == PRE_DISTRESS:
            n_pre += 1
        elif event == BANKRUPTCY:
            if n_pre:
                pre_then_bank = True
            n_bank += 1
        else:
            raise InvalidInputError(f"unknown event kind {event!r}")
    if n_bank >= 2:
        return BankruptcyRisk.HIGH
    if pre_then_bank:
        return BankruptcyRisk.MEDIUM_HIGH
    if n_bank == 1:
        return BankruptcyRisk.MEDIUM
    if n_pre >= 2:
        return BankruptcyRisk.MEDIUM_LOW
    return BankruptcyRisk.LOW


@dataclass(frozen=True)
class RawIndicators:
    incidence_of_investment: float
    financial_autonomy_degree: float
    indebtedness_per_capita: float
    total_investment_financed_by_debt: float
    rigid_expenditure: float
    expense_management_speed: float
    collecting_capacity: float
    extra_budgetary_debts: float
    off_balance_sheet_debts: bool
    bankruptcy_risk: BankruptcyRisk
    demographic_category: DemographicCategory
    geo_area: GeoArea
    population: int


@dataclass(frozen=True)
class MunicipalityYearRecord:
    municipality_id: str
    year: int
    indicators: RawIndicators
    label: int


def validate_record(record: MunicipalityYearRecord,
                    year_range: tuple[int, int] | None = None) -> list[str]:
    """Return all invariant violations of a record; an empty list means valid."""
    problems = []
    ind = record.indicators
    for name in NUMERIC_INDICATORS:
        value = getattr(ind, name)
        if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
            problems.append(f"non-finite field: {name}")
    for name in ("indebtedness_per_capita", "extra_budgetary_debts"):
        value = getattr(ind, name)
        if isinstance(value, (int, float, np.floating, np.integer)) and value < 0:
            problems.append(f"negative field: {name}")
    pop = ind.population
    pop_ok = isinstance(pop, (int, float, np.integer, np.floating)) and math.isfinite(pop) and pop >= 1
    if not pop_ok:
        problems.append("population < 1")
    elif demographic_category_of(pop) is not ind.demographic_category:
        problems.append("category/population mismatch")
    if not isinstance(ind.bankruptcy_risk, BankruptcyRisk):
        problems.append("invalid bankruptcy_risk")
    if not isinstance(ind.geo_area, GeoArea):
        problems.append("invalid geo_area")
    if record.label not in (0, 1):
        problems.append("label not binary")
    if year_range is not None and not year_range[0] <= record.year <= year_range[1]:
        problems.append("year outside range")
    return problems


@dataclass
class Panel:
    """All municipality-year records over a year range, held as one frame.

    Columns: ``municipality_id, year, population, geo_area``, the numeric and
    binary indicators, ``demographic_category`` (1..12), ``bankruptcy_risk``
    (1..5) and ``label`` (0/1, NaN when unknown).
    """

    frame: pd.DataFrame
    year_range: tuple[int, int] = DEFAULT_YEARS

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def n_positive(self) -> int:
        return int((self.frame["label"] == 1).sum())

    def duplicate_keys(self) -> int:
        return int(self.frame.duplicated(["municipality_id", "year"]).sum())

    def check(self) -> None:
        if self.duplicate_keys():
            raise InvalidInputError("duplicate (municipality_id, year) in panel")
        years = self.frame["year"]
        if len(years) and (years.min() < self.year_range[0] or years.max() > self.year_range[1]):
            raise InvalidInputError("record year outside panel year range")

    def records(self) -> Iterator[MunicipalityYearRecord]:
        for row in self.frame.itertuples(index=False):
            yield record_from_row(row._asdict())

    def sorted(self) -> "Panel":
        frame = self.frame.sort_values(["municipality_id", "year"], kind="mergesort")
        return Panel(frame.reset_index(drop=True), self.year_range)


def record_from_row(row: dict) -> MunicipalityYearRecord:
    ind = RawIndicators(
        **{name: float(row[name]) for name in NUMERIC_INDICATORS},
        off_balance_sheet_debts=bool(row["off_balance_sheet_debts"]),
        bankruptcy_risk=BankruptcyRisk(int(row["bankruptcy_risk"])),
        demographic_category=DemographicCategory(int(row["demographic_category"])),
        geo_area=GeoArea(row["geo_area"]),
        population=int(row["population"]),
    )
    return MunicipalityYearRecord(str(row["municipality_id"]), int(row["year"]), ind,
                                  int(row["label"]))


def panel_from_records(records: Sequence[MunicipalityYearRecord],
                       year_range: tuple[int, int] = DEFAULT_YEARS) -> Panel:
    rows = []
    for r in records:
        ind = r.indicators
        row = {"municipality_id": r.municipality_id, "year": r.year,
               "population": ind.population, "geo_area": ind.geo_area.value}
        row.update({name: float(getattr(ind, name)) for name in NUMERIC_INDICATORS})
        row["off_balance_sheet_debts"] = int(ind.off_balance_sheet_debts)
        row["demographic_category"] = ind.demographic_category.value
        row["bankruptcy_risk"] = ind.bankruptcy_risk.value
        row["label"] = r.label
        rows.append(row)
    return Panel(pd.DataFrame(rows, columns=list(PANEL_FRAME_COLUMNS)), year_range)


PANEL_FRAME_COLUMNS = PANEL_COLUMNS + ("demographic_category", "bankruptcy_risk", "label")


@dataclass(frozen=True)
class DistressArchive:
    """Distress events, possibly predating the panel years."""

    events: tuple[tuple[str, int, str], ...] = field(default_factory=tuple)

    def history(self) -> dict[str, list[tuple[int, str]]]:
        out: dict[str, list[tuple[int, str]]] = {}
        for mid, year, kind in self.events:
            out.setdefault(mid, []).append((year, kind))
        for events in out.values():
            # same-year pre-distress is taken to precede bankruptcy
            events.sort(key=lambda e: (e[0], EVENT_KINDS.index(e[1])))
        return out
