"""Relative indicators, business coefficients and the region x feature matrix."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .panel_data import (
    BUSINESSES,
    INDICATORS,
    NO_INDICATOR,
    PanelDataset,
    PanelError,
    national_slice,
    validate_panel,
)

SCOPES = {
    "provinces": ("province",),
    "cities": ("city",),
    "all": ("province", "city"),
}


@dataclass(frozen=True)
class Weights:
    """Indicator weights: penetration, amount per capita, count per capita."""

    m1: float = 0.50
    m2: float = 0.25
    m3: float = 0.25

    def __post_init__(self):
        for m in (self.m1, self.m2, self.m3):
            if not 0.0 <= m <= 1.0:
                raise ValueError(f"weight {m} outside [0, 1]")
        if abs(self.m1 + self.m2 + self.m3 - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.m1, self.m2, self.m3)


def relative_indicator(x_region: float, x_national: float) -> float:
    if x_national <= 0:
        raise ValueError(f"national baseline must be positive, got {x_national}")
    if x_region < 0:
        raise ValueError(f"regional value must be nonnegative, got {x_region}")
    return x_region / x_national


def business_coefficient(a, w: Weights = Weights()) -> float:
    a1, a2, a3 = a
    if min(a1, a2, a3) < 0:
        raise ValueError("relative indicators must be nonnegative")
    return w.m1 * a1 + w.m2 * a2 + w.m3 * a3


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    region_ids: tuple[str, ...]
    feature_labels: tuple[tuple[str, str], ...]
    standardized: bool = False
    column_means: np.ndarray | None = None
    column_stds: np.ndarray | None = None

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape != (len(self.region_ids), len(self.feature_labels)):
            raise ValueError("values shape does not match region_ids x feature_labels")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix contains non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def raw_values(self) -> np.ndarray:
        """Values on the original (unstandardized) scale."""
        if not self.standardized:
            return self.values
        return self.values * self.column_stds + self.column_means

    def take(self, region_ids) -> FeatureMatrix:
        idx = [self.region_ids.index(r) for r in region_ids]
        return replace(self, values=self.values[idx], region_ids=tuple(region_ids))


def build_feature_matrix(
    ds: PanelDataset,
    scope: str = "provinces",
    w: Weights = Weights(),
    national: str = "require",
) -> FeatureMatrix:
    """Arrange business coefficients as a region x (business, month) matrix.

    Rows are sorted by region_id; columns are business-major, month-minor.
    Raw-indicator panels are converted cell by cell (relative indicator
    against the national baseline, then the weighted sum).
    """
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    scoped = ds.subset(SCOPES[scope])
    report = validate_panel(scoped)
    if not report.is_complete:
        raise PanelError(
            f"panel incomplete for scope {scope!r}: {len(report.missing_cells)} missing, "
            f"{len(report.duplicate_cells)} duplicate cells"
        )

    region_ids = tuple(sorted(r.region_id for r in scoped.regions))
    T = ds.months
    labels = tuple((b, ds.month_labels[t]) for b in BUSINESSES for t in range(T))
    values = np.empty((len(region_ids), len(labels)))
    cells = scoped.cell_index()

    if ds.mode == "precomputed_coefficients":
        for r, rid in enumerate(region_ids):
            for bi, b in enumerate(BUSINESSES):
                for t in range(T):
                    values[r, bi * T + t] = cells[(rid, b, NO_INDICATOR, t)]
    else:
        all_cells = ds.cell_index()
        baseline = {
            (b, ind, t): national_slice(ds, b, ind, t, national=national, cells=all_cells)
            for b in BUSINESSES
            for ind in INDICATORS
            for t in range(T)
        }
        for r, rid in enumerate(region_ids):
            for bi, b in enumerate(BUSINESSES):
                for t in range(T):
                    rel = [
                        relative_indicator(cells[(rid, b, ind, t)], baseline[(b, ind, t)])
                        for ind in INDICATORS
                    ]
                    values[r, bi * T + t] = business_coefficient(rel, w)
    return FeatureMatrix(values, region_ids, labels)


def standardize(fm: FeatureMatrix) -> FeatureMatrix:
    """Per-column z-score with population std; constant columns become zeros."""
    if fm.standardized:
        raise ValueError("feature matrix is already standardized")
    means = fm.values.mean(axis=0)
    stds = fm.values.std(axis=0)
    constant = np.isclose(stds, 0.0, rtol=0.0, atol=1e-12 * np.maximum(1.0, np.abs(means)))
    stds = np.where(constant, 1.0, stds)
    z = (fm.values - means) / stds
    z[:, constant] = 0.0
    return replace(fm, values=z, standardized=True, column_means=means, column_stds=stds)


def feature_label(label: tuple[str, str]) -> str:
    return f"{label[0]}@{label[1]}"


def feature_matrix_to_csv(fm: FeatureMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["region_id", *(feature_label(l) for l in fm.feature_labels)])
    for rid, row in zip(fm.region_ids, fm.values):
        writer.writerow([rid, *(repr(float(x)) for x in row)])
    return buf.getvalue()


def feature_matrix_from_csv(text: str) -> FeatureMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:1] != ["region_id"]:
        raise ValueError("feature CSV must start with a region_id header")
    labels = []
    for col in rows[0][1:]:
        business, _, month = col.partition("@")
        labels.append((business, month))
    body = [r for r in rows[1:] if r]
    values = np.array([[float(x) for x in r[1:]] for r in body]).reshape(len(body), len(labels))
    return FeatureMatrix(values, tuple(r[0] for r in body), tuple(labels))
