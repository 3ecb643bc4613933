"""Regional index panel: CSV ingestion, validation and national baselines.

A panel holds one value per (region, business, indicator, month).  In
``raw_indicators`` mode the three indicators are kept separately and a
``national`` region supplies the baseline each region is divided by.  In
``precomputed_coefficients`` mode the value already is the business
coefficient and the indicator column is ignored (written as ``-``).
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import IO, Iterable

BUSINESSES = ("payment", "fund", "credit", "insurance")
INDICATORS = ("penetration", "amount_per_capita", "count_per_capita")
ADMIN_LEVELS = ("province", "city", "national")
MODES = ("raw_indicators", "precomputed_coefficients")

HEADER = ("region_id", "region_name", "admin_level", "business", "indicator", "month", "value")
NO_INDICATOR = "-"

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


class PanelError(ValueError):
    """Raised for malformed or inconsistent panel input."""


@dataclass(frozen=True)
class RegionRecord:
    region_id: str
    region_name: str
    admin_level: str


@dataclass(frozen=True)
class Observation:
    region_id: str
    business: str
    indicator: str
    month: int
    value: float

    def key(self, mode: str) -> tuple:
        if mode == "precomputed_coefficients":
            return (self.region_id, self.business, NO_INDICATOR, self.month)
        return (self.region_id, self.business, self.indicator, self.month)


@dataclass(frozen=True)
class PanelDataset:
    regions: tuple[RegionRecord, ...]
    observations: tuple[Observation, ...]
    month_labels: tuple[str, ...]
    mode: str = "precomputed_coefficients"

    def __post_init__(self):
        if self.mode not in MODES:
            raise PanelError(f"unknown mode {self.mode!r}")
        ids = [r.region_id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise PanelError("region_id values must be unique")
        if sum(r.admin_level == "national" for r in self.regions) > 1:
            raise PanelError("at most one national record is allowed")

    @property
    def months(self) -> int:
        return len(self.month_labels)

    @property
    def national(self) -> RegionRecord | None:
        for r in self.regions:
            if r.admin_level == "national":
                return r
        return None

    def indicators(self) -> tuple[str, ...]:
        return INDICATORS if self.mode == "raw_indicators" else (NO_INDICATOR,)

    def cell_index(self) -> dict[tuple, float]:
        """Map of cell key to value (last one wins on duplicates)."""
        return {o.key(self.mode): o.value for o in self.observations}

    def subset(self, levels: Iterable[str]) -> PanelDataset:
        """Restrict to regions whose admin level is in ``levels``."""
        levels = set(levels)
        regions = tuple(r for r in self.regions if r.admin_level in levels)
        keep = {r.region_id for r in regions}
        obs = tuple(o for o in self.observations if o.region_id in keep)
        return PanelDataset(regions, obs, self.month_labels, self.mode)


@dataclass
class ValidationReport:
    observation_count: int
    missing_cells: list[tuple] = field(default_factory=list)
    duplicate_cells: list[tuple] = field(default_factory=list)
    is_complete: bool = False

    def to_dict(self) -> dict:
        return {
            "observation_count": self.observation_count,
            "missing_cells": [list(c) for c in self.missing_cells],
            "duplicate_cells": [list(c) for c in self.duplicate_cells],
            "is_complete": self.is_complete,
        }


def _month_ordinal(label: str) -> int:
    m = _MONTH_RE.match(label)
    if not m:
        raise ValueError(f"month {label!r} is not YYYY-MM")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"month {label!r} out of range")
    return year * 12 + month - 1


def _month_label(ordinal: int) -> str:
    return f"{ordinal // 12:04d}-{ordinal % 12 + 1:02d}"


def month_range(start: str, count: int) -> tuple[str, ...]:
    first = _month_ordinal(start)
    return tuple(_month_label(first + t) for t in range(count))


def parse_panel(source: bytes | str | IO, mode: str = "precomputed_coefficients") -> PanelDataset:
    """Parse panel CSV into a :class:`PanelDataset`.

    ``source`` may be raw bytes, a text string, or an open file (text or
    binary).  Errors carry the 1-based line number of the offending row.
    """
    if mode not in MODES:
        raise PanelError(f"unknown mode {mode!r}")
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise PanelError(f"input is not UTF-8: {exc}") from None

    reader = csv.reader(io.StringIO(source))
    try:
        header = next(reader)
    except StopIteration:
        raise PanelError("empty input: missing header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise PanelError(f"line 1: expected header {','.join(HEADER)}")

    regions: dict[str, RegionRecord] = {}
    rows = []
    seen: dict[tuple, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise PanelError(f"line {line}: expected {len(HEADER)} fields, got {len(row)}")
        region_id, name, level, business, indicator, month, value = (c.strip() for c in row)
        if not region_id:
            raise PanelError(f"line {line}: empty region_id")
        if level not in ADMIN_LEVELS:
            raise PanelError(f"line {line}: unknown admin_level {level!r}")
        if business not in BUSINESSES:
            raise PanelError(f"line {line}: unknown business {business!r}")
        if mode == "raw_indicators":
            if indicator not in INDICATORS:
                raise PanelError(f"line {line}: unknown indicator {indicator!r}")
        else:
            if indicator not in INDICATORS and indicator != NO_INDICATOR:
                raise PanelError(f"line {line}: unknown indicator {indicator!r}")
            indicator = NO_INDICATOR
        try:
            ordinal = _month_ordinal(month)
        except ValueError as exc:
            raise PanelError(f"line {line}: {exc}") from None
        try:
            x = float(value)
        except ValueError:
            raise PanelError(f"line {line}: non-numeric value {value!r}") from None
        if x != x or x in (float("inf"), float("-inf")):
            raise PanelError(f"line {line}: non-finite value {value!r}")
        if x < 0:
            raise PanelError(f"line {line}: negative value {value!r}")

        record = RegionRecord(region_id, name, level)
        prev = regions.setdefault(region_id, record)
        if prev != record:
            raise PanelError(f"line {line}: region {region_id!r} redeclared with different name or level")

        key = (region_id, business, indicator, ordinal)
        if key in seen:
            raise PanelError(f"duplicate key {key[:3] + (month,)} at lines {seen[key]} and {line}")
        seen[key] = line
        rows.append((region_id, business, indicator, ordinal, x))

    if not rows:
        return PanelDataset((), (), (), mode)

    ordinals = sorted({r[3] for r in rows})
    first, last = ordinals[0], ordinals[-1]
    if len(ordinals) != last - first + 1:
        gaps = sorted(set(range(first, last + 1)) - set(ordinals))
        raise PanelError(f"calendar gap: no rows for month(s) {', '.join(_month_label(g) for g in gaps)}")
    labels = tuple(_month_label(o) for o in range(first, last + 1))
    observations = tuple(Observation(r[0], r[1], r[2], r[3] - first, r[4]) for r in rows)
    return PanelDataset(tuple(regions.values()), observations, labels, mode)


def serialize_panel(ds: PanelDataset) -> str:
    """Write ``ds`` back out in the input CSV schema."""
    regions = {r.region_id: r for r in ds.regions}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for o in ds.observations:
        r = regions[o.region_id]
        indicator = o.indicator if ds.mode == "raw_indicators" else NO_INDICATOR
        writer.writerow(
            [r.region_id, r.region_name, r.admin_level, o.business, indicator,
             ds.month_labels[o.month], repr(float(o.value))]
        )
    return buf.getvalue()


def validate_panel(ds: PanelDataset) -> ValidationReport:
    """Check ``ds`` against its full expected grid.

    The grid is regions x businesses x indicators (one slot in precomputed
    mode) x months.  An empty dataset is never complete.
    """
    counts: dict[tuple, int] = {}
    for o in ds.observations:
        k = o.key(ds.mode)
        counts[k] = counts.get(k, 0) + 1
    duplicates = sorted(k for k, c in counts.items() if c > 1)
    missing = [
        (r.region_id, b, ind, t)
        for r in ds.regions
        for b in BUSINESSES
        for ind in ds.indicators()
        for t in range(ds.months)
        if (r.region_id, b, ind, t) not in counts
    ]
    # an empty dataset has an empty grid, which would otherwise read as complete
    nonempty = bool(ds.observations) and ds.months > 0
    return ValidationReport(
        observation_count=len(ds.observations),
        missing_cells=missing,
        duplicate_cells=duplicates,
        is_complete=nonempty and not missing and not duplicates,
    )


def impute_mean(ds: PanelDataset) -> PanelDataset:
    """Fill missing cells with the region's mean for that business (and indicator)."""
    cells = ds.cell_index()
    filled = list(ds.observations)
    for region_id, business, indicator, t in validate_panel(ds).missing_cells:
        present = [
            cells[(region_id, business, indicator, s)]
            for s in range(ds.months)
            if (region_id, business, indicator, s) in cells
        ]
        if not present:
            raise PanelError(f"cannot impute {region_id}/{business}: no observed months")
        filled.append(Observation(region_id, business, indicator, t, sum(present) / len(present)))
    return PanelDataset(ds.regions, tuple(filled), ds.month_labels, ds.mode)


def national_slice(
    ds: PanelDataset,
    business: str,
    indicator: str,
    month: int,
    national: str = "require",
    cells: dict | None = None,
) -> float:
    """National baseline value for one cell.

    With ``national="aggregate"`` and no national record, the unweighted
    mean over the non-national regions is used instead.
    """
    if ds.mode != "raw_indicators":
        raise PanelError("national baseline only exists in raw_indicators mode")
    if cells is None:
        cells = ds.cell_index()
    nat = ds.national
    if nat is None:
        if national != "aggregate":
            raise PanelError("national cell missing: dataset has no national record")
        values = [
            cells[(r.region_id, business, indicator, month)]
            for r in ds.regions
            if (r.region_id, business, indicator, month) in cells
        ]
        if not values:
            raise PanelError(f"national cell missing: no regional values for {business}/{indicator}/{month}")
        return sum(values) / len(values)
    try:
        return cells[(nat.region_id, business, indicator, month)]
    except KeyError:
        raise PanelError(f"national cell missing: {business}/{indicator}/{ds.month_labels[month]}") from None
