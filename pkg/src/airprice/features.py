"""From cleaned records to a numeric design matrix."""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from airprice.errors import DegenerateDataError, DomainError, SchemaError
from airprice.ingest import CalendarEntry, DropReport, ListingRecord

OTHER = "__other__"
TRANSFORMS = ("identity", "log1p")

DEFAULT_NUMERIC: tuple[tuple[str, str], ...] = (
    ("bedrooms", "identity"),
    ("bathrooms", "identity"),
    ("accommodates", "identity"),
    ("cleaning_fee", "log1p"),
    ("security_deposit", "log1p"),
    ("extra_people", "log1p"),
    ("latitude", "identity"),
    ("longitude", "identity"),
    ("availability_30", "identity"),
    ("availability_60", "identity"),
    ("availability_90", "identity"),
    ("availability_365", "identity"),
)
DEFAULT_CATEGORICAL: tuple[str, ...] = ("room_type", "zipcode", "neighborhood")
FRIDAY, SATURDAY = 4, 5


@dataclass(frozen=True)
class OutlierRules:
    price_upper_quantile: float = 0.95
    max_bedrooms: float = 4


@dataclass(frozen=True)
class EncodingSpec:
    numeric_columns: tuple[tuple[str, str], ...]
    categorical_columns: tuple[tuple[str, tuple[str, ...]], ...]
    outlier_rules: OutlierRules = OutlierRules()
    impute_absent_fee_as_zero: bool = True
    include_month: bool = True

    @property
    def column_names(self) -> list[str]:
        names = [name for name, _ in self.numeric_columns]
        if self.include_month:
            names.append("month")
        for name, vocab in self.categorical_columns:
            names.extend(f"{name}={v}" for v in vocab)
            names.append(f"{name}={OTHER}")
        return names

    def to_dict(self) -> dict:
        return {
            "numeric_columns": [list(c) for c in self.numeric_columns],
            "categorical_columns": [[name, list(vocab)] for name, vocab in self.categorical_columns],
            "outlier_rules": {
                "price_upper_quantile": self.outlier_rules.price_upper_quantile,
                "max_bedrooms": self.outlier_rules.max_bedrooms,
            },
            "impute_absent_fee_as_zero": self.impute_absent_fee_as_zero,
            "include_month": self.include_month,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingSpec":
        return cls(
            numeric_columns=tuple((n, t) for n, t in d["numeric_columns"]),
            categorical_columns=tuple((n, tuple(v)) for n, v in d["categorical_columns"]),
            outlier_rules=OutlierRules(**d["outlier_rules"]),
            impute_absent_fee_as_zero=d["impute_absent_fee_as_zero"],
            include_month=d["include_month"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EncodingSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class FeatureMatrix:
    values: np.ndarray
    column_names: list[str]
    target: np.ndarray
    listing_ids: np.ndarray
    row_dates: list[dt.date | None] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        self.listing_ids = np.asarray(self.listing_ids, dtype=np.int64)
        n = self.values.shape[0]
        if self.values.ndim != 2 or self.values.shape[1] != len(self.column_names):
            raise SchemaError("values shape does not match column_names")
        if len(self.target) != n or len(self.listing_ids) != n:
            raise SchemaError("target / listing_ids length does not match values")
        if self.row_dates is not None and len(self.row_dates) != n:
            raise SchemaError("row_dates length does not match values")
        if not (np.isfinite(self.values).all() and np.isfinite(self.target).all()):
            raise DegenerateDataError("feature matrix contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def take(self, index) -> "FeatureMatrix":
        index = np.asarray(index, dtype=np.int64)
        dates = None if self.row_dates is None else [self.row_dates[i] for i in index]
        return FeatureMatrix(self.values[index], list(self.column_names), self.target[index],
                             self.listing_ids[index], dates)


def log1p_transform(x):
    """ln(1 + x) for x >= 0; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("log1p_transform requires nonnegative input")
    if arr.ndim == 0:
        return math.log1p(float(arr))
    return np.log1p(arr)


def filter_outliers(records: Sequence[ListingRecord],
                    rules: OutlierRules = OutlierRules()) -> tuple[list[ListingRecord], DropReport]:
    """Drop rows priced above the empirical upper quantile or with too many bedrooms."""
    q = rules.price_upper_quantile
    if not 0.5 < q <= 1.0:
        raise DomainError(f"price_upper_quantile must lie in (0.5, 1], got {q}")
    report = DropReport(n_input=len(records))
    if not records:
        return [], report
    prices = np.array([r.price for r in records if r.price is not None], dtype=np.float64)
    cutoff = float(np.quantile(prices, q)) if len(prices) else math.inf
    kept = []
    for r in records:
        if r.price is not None and r.price > cutoff:
            report.add("price_quantile")
        elif r.bedrooms > rules.max_bedrooms:
            report.add("max_bedrooms")
        else:
            kept.append(r)
    return kept, report


def _category(rec: ListingRecord, name: str) -> str:
    value = getattr(rec, name)
    return "" if value is None else str(value)


def fit_encoding(records: Sequence[ListingRecord],
                 numeric: Iterable[tuple[str, str]] = DEFAULT_NUMERIC,
                 categorical: Iterable[str] = DEFAULT_CATEGORICAL,
                 rules: OutlierRules = OutlierRules(),
                 impute_absent_fee_as_zero: bool = True) -> EncodingSpec:
    """Freeze sorted category vocabularies from the data.

    The month column is included only when every record carries a snapshot date.
    """
    numeric = tuple((n, t) for n, t in numeric)
    for name, transform in numeric:
        if transform not in TRANSFORMS:
            raise SchemaError(f"unknown transform {transform!r} for column {name!r}")
    cats = tuple((name, tuple(sorted({_category(r, name) for r in records})))
                 for name in categorical)
    include_month = bool(records) and all(r.snapshot_date is not None for r in records)
    return EncodingSpec(numeric, cats, rules, impute_absent_fee_as_zero, include_month)


def encode_features(records: Sequence[ListingRecord], spec: EncodingSpec) -> np.ndarray:
    """Design matrix only (no target); used for prediction inputs."""
    n_cols = len(spec.column_names)
    out = np.zeros((len(records), n_cols), dtype=np.float64)
    lookups = [{v: i for i, v in enumerate(vocab)} for _, vocab in spec.categorical_columns]
    for i, rec in enumerate(records):
        j = 0
        for name, transform in spec.numeric_columns:
            if not hasattr(rec, name):
                raise SchemaError(f"record has no column {name!r}")
            value = getattr(rec, name)
            if value is None:
                if spec.impute_absent_fee_as_zero and name in ("cleaning_fee", "security_deposit",
                                                                "extra_people"):
                    value = 0.0
                else:
                    raise SchemaError(f"listing {rec.listing_id}: column {name!r} is absent")
            out[i, j] = log1p_transform(value) if transform == "log1p" else float(value)
            j += 1
        if spec.include_month:
            if rec.snapshot_date is None:
                raise SchemaError(f"listing {rec.listing_id}: snapshot_date needed for month")
            out[i, j] = rec.snapshot_date.month
            j += 1
        for (name, vocab), lookup in zip(spec.categorical_columns, lookups):
            if not hasattr(rec, name):
                raise SchemaError(f"record has no column {name!r}")
            slot = lookup.get(_category(rec, name), len(vocab))
            out[i, j + slot] = 1.0
            j += len(vocab) + 1
    return out


def encode(records: Sequence[ListingRecord], spec: EncodingSpec) -> FeatureMatrix:
    values = encode_features(records, spec)
    prices = []
    for rec in records:
        if rec.price is None:
            raise SchemaError(f"listing {rec.listing_id}: price is absent")
        prices.append(rec.price)
    target = log1p_transform(np.array(prices, dtype=np.float64))
    return FeatureMatrix(values, spec.column_names, target,
                         np.array([r.listing_id for r in records], dtype=np.int64),
                         [r.snapshot_date for r in records])


def weekend_flag(day: dt.date, weekend_days: Iterable[int] = (FRIDAY, SATURDAY)) -> bool:
    """True when the night starting on ``day`` is a weekend night (Fri/Sat by default)."""
    return day.weekday() in tuple(weekend_days)


def weekend_median_comparison(entries: Iterable[CalendarEntry], balance: bool = False,
                              seed: int = 0,
                              weekend_days: Iterable[int] = (FRIDAY, SATURDAY)) -> tuple[float, float]:
    """Median nightly price on weekday vs weekend nights.

    With ``balance`` the larger class is uniformly subsampled to the size of
    the smaller one before taking medians.
    """
    weekend_days = tuple(weekend_days)
    weekday, weekend = [], []
    for e in entries:
        if e.price is None:
            continue
        (weekend if weekend_flag(e.date, weekend_days) else weekday).append(e.price)
    if not weekday:
        raise DegenerateDataError("no priced weekday entries")
    if not weekend:
        raise DegenerateDataError("no priced weekend entries")
    a = np.array(weekday, dtype=np.float64)
    b = np.array(weekend, dtype=np.float64)
    if balance and len(a) != len(b):
        rng = np.random.default_rng(seed)
        if len(a) > len(b):
            a = a[np.sort(rng.choice(len(a), size=len(b), replace=False))]
        else:
            b = b[np.sort(rng.choice(len(b), size=len(a), replace=False))]
    return float(np.median(a)), float(np.median(b))


def pearson_correlation(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("x and y must be 1-D vectors of equal length")
    if len(x) < 2:
        raise DomainError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateDataError("correlation undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def correlation_matrix(values: np.ndarray) -> np.ndarray:
    """Pairwise Pearson matrix; NaN where a column is constant."""
    p = values.shape[1]
    out = np.full((p, p), np.nan)
    for i in range(p):
        for j in range(i, p):
            try:
                out[i, j] = out[j, i] = pearson_correlation(values[:, i], values[:, j])
            except DegenerateDataError:
                pass
    return out
