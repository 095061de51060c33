"""Load the financial panel and the distress archive, merge and clean them."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
import pandas as pd

from .domain import (ARCHIVE_COLUMNS, BANKRUPTCY, DEFAULT_YEARS,
                     GEO_AREAS, NUMERIC_INDICATORS, PANEL_COLUMNS,
                     PANEL_FRAME_COLUMNS, PRE_DISTRESS, DistressArchive,
                     EmptyDatasetError, ParseError, Panel, SchemaError,
                     category_codes)

log = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "n/a", "nan", "null", "none", "-"}
_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}
_KIND_ALIASES = {
    "pre-distress": PRE_DISTRESS, "predistress": PRE_DISTRESS,
    "pre_distress": PRE_DISTRESS, "pre distress": PRE_DISTRESS,
    "bankruptcy": BANKRUPTCY, "distress": BANKRUPTCY, "dissesto": BANKRUPTCY,
    "predissesto": PRE_DISTRESS,
}


@dataclass(frozen=True)
class Diagnostic:
    line: int
    kind: str  # "malformed" | "missing-value" | "warning"
    message: str


@dataclass
class ParsedRows:
    frame: pd.DataFrame
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def malformed(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.kind == "malformed"]


@dataclass
class CleaningReport:
    rows_read: int = 0
    rows_kept: int = 0
    rows_dropped: dict[str, int] = field(default_factory=dict)
    values_imputed: dict[str, int] = field(default_factory=dict)
    duplicates_removed: int = 0
    out_of_range_dropped: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def n_dropped(self) -> int:
        return sum(self.rows_dropped.values())

    def to_dict(self) -> dict:
        return {
            "kind": "cleaning_report",
            "rows_read": self.rows_read,
            "rows_kept": self.rows_kept,
            "rows_dropped": dict(sorted(self.rows_dropped.items())),
            "values_imputed": dict(sorted(self.values_imputed.items())),
            "duplicates_removed": self.duplicates_removed,
            "out_of_range_dropped": self.out_of_range_dropped,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class CleaningPolicy:
    impute: str = "median"
    drop_missing: tuple[str, ...] = ("label", "population", "geo_area")


def _as_text(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return open(source, encoding="utf-8", newline="")
    if hasattr(source, "read"):
        sample = source.read()
        if isinstance(sample, bytes):
            sample = sample.decode("utf-8")
        return io.StringIO(sample)
    return open(source, encoding="utf-8", newline="")  # os.PathLike


def _read_rows(source, delimiter: str, required: Iterable[str]):
    try:
        handle = _as_text(source)
    except OSError:
        raise
    with handle:
        reader = csv.reader(handle, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: header row missing")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"missing mandatory column(s): {', '.join(missing)}")
        index = {name: header.index(name) for name in header}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            yield line_no, row, index, len(header)


def _float_cell(text: str):
    """Parse a numeric cell: float, NaN for a missing token, None if malformed."""
    token = text.strip()
    if token.lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(token)
    except ValueError:
        return None


def parse_financial_panel(source, schema: dict[str, str] | None = None,
                          delimiter: str = ",") -> ParsedRows:
    """Parse the delimiter-separated financial panel.

    ``schema`` maps canonical column names to the names used in the file.
    Malformed rows are reported with their line number and excluded; cells
    holding a missing-value token are kept as NaN and reported.
    """
    schema = schema or {}
    names = {c: schema.get(c, c) for c in PANEL_COLUMNS}
    rows = []
    diagnostics = []
    for line_no, row, index, width in _read_rows(source, delimiter, names.values()):
        if len(row) != width:
            diagnostics.append(Diagnostic(line_no, "malformed",
                                          f"expected {width} fields, found {len(row)}"))
            continue
        rec = {}
        bad = None
        mid = row[index[names["municipality_id"]]].strip()
        if not mid:
            bad = "empty municipality_id"
        rec["municipality_id"] = mid
        try:
            rec["year"] = int(row[index[names["year"]]].strip())
        except ValueError:
            bad = bad or f"bad year {row[index[names['year']]]!r}"
        missing_cols = []
        for col in ("population",) + NUMERIC_INDICATORS:
            value = _float_cell(row[index[names[col]]])
            if value is None:
                bad = bad or f"non-numeric {col} {row[index[names[col]]]!r}"
            elif math.isnan(value):
                missing_cols.append(col)
            rec[col] = value
        geo = row[index[names["geo_area"]]].strip().lower().replace("_", "-").replace(" ", "-")
        if geo in MISSING_TOKENS:
            missing_cols.append("geo_area")
            geo = None
        elif geo not in GEO_AREAS:
            bad = bad or f"unknown geo_area {geo!r}"
        rec["geo_area"] = geo
        flag = row[index[names["off_balance_sheet_debts"]]].strip().lower()
        if flag in _TRUE:
            rec["off_balance_sheet_debts"] = 1.0
        elif flag in _FALSE:
            rec["off_balance_sheet_debts"] = 0.0
        elif flag in MISSING_TOKENS:
            rec["off_balance_sheet_debts"] = math.nan
            missing_cols.append("off_balance_sheet_debts")
        else:
            bad = bad or f"bad off_balance_sheet_debts {flag!r}"
        if bad:
            diagnostics.append(Diagnostic(line_no, "malformed", bad))
            continue
        for col in missing_cols:
            diagnostics.append(Diagnostic(line_no, "missing-value", col))
        rows.append(rec)
    frame = pd.DataFrame(rows, columns=list(PANEL_COLUMNS))
    frame["year"] = frame["year"].astype(int)
    return ParsedRows(frame, diagnostics)


def normalize_event_kind(kind: str) -> str:
    key = kind.strip().lower()
    if key not in _KIND_ALIASES:
        raise ParseError(f"unknown event kind {kind!r}")
    return _KIND_ALIASES[key]


def parse_distress_archive(source, delimiter: str = ",") -> DistressArchive:
    events = []
    seen = set()
    for line_no, row, index, width in _read_rows(source, delimiter, ARCHIVE_COLUMNS):
        if len(row) != width:
            raise ParseError(f"line {line_no}: expected {width} fields, found {len(row)}")
        mid = row[index["municipality_id"]].strip()
        try:
            year = int(row[index["year"]].strip())
        except ValueError:
            raise ParseError(f"line {line_no}: bad year {row[index['year']]!r}") from None
        try:
            kind = normalize_event_kind(row[index["event_kind"]])
        except ParseError as exc:
            raise ParseError(f"line {line_no}: {exc}") from None
        key = (mid, year, kind)
        if key not in seen:
            seen.add(key)
            events.append(key)
    return DistressArchive(tuple(events))


def risk_levels_for(history: list[tuple[int, str]], years: np.ndarray) -> np.ndarray:
    """Risk level at each year, using only events strictly before that year."""
    out = np.ones(len(years), dtype=int)
    if not history:
        return out
    n_pre = n_bank = 0
    pre_then_bank = False
    level_after = []  # (event year, level after processing that event)
    for year, kind in history:
        if kind == PRE_DISTRESS:
            n_pre += 1
        else:
            pre_then_bank = pre_then_bank or n_pre > 0
            n_bank += 1
        level = 5 if n_bank >= 2 else 4 if pre_then_bank else 3 if n_bank == 1 \
            else 2 if n_pre >= 2 else 1
        level_after.append((year, level))
    event_years = np.array([y for y, _ in level_after])
    levels = np.array([lv for _, lv in level_after])
    pos = np.searchsorted(event_years, years, side="left") - 1
    has = pos >= 0
    out[has] = levels[pos[has]]
    return out


def merge_panel(rows: ParsedRows | pd.DataFrame, archive: DistressArchive,
                year_range: tuple[int, int] = DEFAULT_YEARS,
                diagnostics: list[Diagnostic] | None = None) -> Panel:
    """Attach labels, bankruptcy risk and demographic category to raw rows."""
    frame = rows.frame if isinstance(rows, ParsedRows) else rows
    frame = frame.loc[:, list(PANEL_COLUMNS)].copy()
    in_range = frame["year"].between(*year_range)
    n_out = int((~in_range).sum())
    frame = frame[in_range].reset_index(drop=True)
    frame.attrs["out_of_range_dropped"] = n_out

    history = archive.history()
    known = set(frame["municipality_id"])
    for mid in sorted(set(history) - known):
        msg = f"archive references municipality {mid!r} absent from panel rows"
        log.warning(msg)
        if diagnostics is not None:
            diagnostics.append(Diagnostic(0, "warning", msg))

    bankrupt = {(m, y) for m, y, k in archive.events if k == BANKRUPTCY}
    frame["label"] = [1 if (m, y) in bankrupt else 0
                      for m, y in zip(frame["municipality_id"], frame["year"])]
    risk = np.ones(len(frame), dtype=int)
    if history:
        for mid, idx in frame.groupby("municipality_id", sort=False).indices.items():
            if mid in history:
                risk[idx] = risk_levels_for(history[mid], frame["year"].to_numpy()[idx])
    frame["bankruptcy_risk"] = risk
    pop = frame["population"].to_numpy(dtype=float)
    cat = np.full(len(frame), np.nan)
    ok = pop >= 1
    cat[ok] = category_codes(pop[ok])
    frame["demographic_category"] = cat
    # integer fields stay float only while they hold missing values
    for col in ("population", "off_balance_sheet_debts", "demographic_category"):
        if frame[col].notna().all():
            frame[col] = frame[col].astype(np.int64)
    frame = frame.loc[:, list(PANEL_FRAME_COLUMNS)]
    panel = Panel(frame, year_range)
    return panel


def clean(panel: Panel, policy: CleaningPolicy = CleaningPolicy()) -> tuple[Panel, CleaningReport]:
    frame = panel.frame
    report = CleaningReport(rows_read=len(frame) + int(frame.attrs.get("out_of_range_dropped", 0)))
    report.out_of_range_dropped = int(frame.attrs.get("out_of_range_dropped", 0))
    if report.out_of_range_dropped:
        report.rows_dropped["out_of_year_range"] = report.out_of_range_dropped

    dup = frame.duplicated(["municipality_id", "year"], keep="first")
    report.duplicates_removed = int(dup.sum())
    if report.duplicates_removed:
        report.rows_dropped["duplicate"] = report.duplicates_removed
    frame = frame[~dup]

    for col in policy.drop_missing:
        bad = frame[col].isna()
        if col == "population":
            bad |= ~(frame[col] >= 1)
        if bad.any():
            report.rows_dropped[f"missing_{col}"] = int(bad.sum())
            frame = frame[~bad]
    if len(frame) == 0:
        raise EmptyDatasetError("no rows left after cleaning")

    frame = frame.copy()
    if policy.impute != "median":
        raise ValueError(f"unsupported imputation policy {policy.impute!r}")
    for col in NUMERIC_INDICATORS + ("off_balance_sheet_debts",):
        missing = frame[col].isna()
        if missing.any():
            if missing.all():
                raise EmptyDatasetError(f"column {col} has no observed values to impute from")
            fill = frame[col].median()
            if col == "off_balance_sheet_debts":
                fill = float(fill >= 0.5)
            frame.loc[missing, col] = fill
            report.values_imputed[col] = int(missing.sum())
    frame["label"] = frame["label"].astype(int)
    frame["population"] = frame["population"].astype(int)
    frame["demographic_category"] = category_codes(frame["population"].to_numpy())
    frame["off_balance_sheet_debts"] = frame["off_balance_sheet_debts"].astype(int)
    frame = frame.reset_index(drop=True)
    report.rows_kept = len(frame)
    return Panel(frame, panel.year_range), report


def load_panel(panel_path, archive_path, year_range=DEFAULT_YEARS, delimiter=",",
               policy: CleaningPolicy = CleaningPolicy()):
    """Parse, merge and clean both sources; returns (panel, report, diagnostics)."""
    parsed = parse_financial_panel(panel_path, delimiter=delimiter)
    archive = parse_distress_archive(archive_path, delimiter=delimiter)
    diagnostics = list(parsed.diagnostics)
    merged = merge_panel(parsed, archive, year_range, diagnostics)
    panel, report = clean(merged, policy)
    report.rows_read += len(parsed.malformed)
    if parsed.malformed:
        report.rows_dropped["malformed"] = len(parsed.malformed)
    report.warnings.extend(f"line {d.line}: {d.message}" for d in diagnostics
                           if d.kind != "missing-value")
    return panel, report, archive


def write_panel_csv(panel: Panel, path, delimiter: str = ",") -> None:
    """Write the raw ingest schema (no derived columns)."""
    frame = panel.frame
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(PANEL_COLUMNS)
        cols = [frame[c].tolist() for c in PANEL_COLUMNS]
        for row in zip(*cols):
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def write_archive_csv(archive: DistressArchive, path, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(ARCHIVE_COLUMNS)
        writer.writerows(archive.events)
