"""Error metrics, exploratory tables and the run report on disk."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from airprice.errors import DomainError

DEFAULT_THRESHOLDS = (5.0, 10.0, 20.0, 30.0)
SECTIONS = ("meta", "eda", "baseline", "gate", "balance", "search", "final", "availability",
            "warnings")


def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if y.shape != p.shape or y.size == 0:
        raise DomainError("metrics need two nonempty vectors of equal shape")
    return y, p


def rmse(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    d = np.abs(y - p)
    scale = float(d.max())
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    # scaling keeps tiny differences from underflowing when squared
    return scale * math.sqrt(float(np.mean((d / scale) ** 2)))


def mae(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    return float(np.mean(np.abs(y - p)))


def mape(y_true, y_pred) -> float:
    """Mean absolute percentage error, in percent."""
    y, p = _pair(y_true, y_pred)
    zero = np.flatnonzero(y == 0)
    if len(zero):
        raise DomainError(f"mape undefined where y_true == 0 (rows {zero[:10].tolist()})")
    return 100.0 * float(np.mean(np.abs(y - p) / np.abs(y)))


@dataclass
class ErrorBucketTable:
    thresholds: list[float]
    cumulative_percentages: list[float]

    def rows(self) -> list[tuple[str, float]]:
        return [(f"<= {t:g}", pct) for t, pct in zip(self.thresholds, self.cumulative_percentages)]

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds),
                "cumulative_percentages": list(self.cumulative_percentages)}


def error_buckets(errors, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> ErrorBucketTable:
    """Percentage of absolute errors at or below each threshold."""
    e = np.abs(np.asarray(errors, dtype=np.float64))
    ts = [float(t) for t in thresholds]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise DomainError("thresholds must be strictly increasing")
    if e.size == 0:
        return ErrorBucketTable(ts, [0.0] * len(ts))
    return ErrorBucketTable(ts, [100.0 * float(np.mean(e <= t)) for t in ts])


def histogram(values, bins=10) -> tuple[np.ndarray, np.ndarray]:
    """(edges, counts); bins are [a, b) except the last, which is closed."""
    v = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(v, bins=bins)
    return edges, counts


@dataclass
class HeatmapGrid:
    lat_edges: np.ndarray
    lon_edges: np.ndarray
    cell_stat: np.ndarray  # NaN where the cell is empty
    cell_count: np.ndarray

    def rows(self):
        """Long format: one row per populated cell."""
        out = []
        for i in range(len(self.lat_edges) - 1):
            for j in range(len(self.lon_edges) - 1):
                if self.cell_count[i, j]:
                    out.append((self.lat_edges[i], self.lat_edges[i + 1], self.lon_edges[j],
                                self.lon_edges[j + 1], int(self.cell_count[i, j]),
                                float(self.cell_stat[i, j])))
        return out


def _edges(v: np.ndarray, n_bins: int) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, n_bins + 1)


def _bin(v: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, v, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def heatmap_grid(lat, lon, price, n_bins: int = 50, stat: str = "median") -> HeatmapGrid:
    """Equal-width lat/lon grid over the observed ranges with a per-cell price statistic."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    price = np.asarray(price, dtype=np.float64)
    if not (lat.shape == lon.shape == price.shape) or lat.size == 0:
        raise DomainError("heatmap needs equal-length, nonempty lat/lon/price")
    if stat not in ("median", "mean"):
        raise DomainError("stat must be 'median' or 'mean'")
    lat_edges, lon_edges = _edges(lat, n_bins), _edges(lon, n_bins)
    bi, bj = _bin(lat, lat_edges), _bin(lon, lon_edges)
    count = np.zeros((n_bins, n_bins), np.int64)
    np.add.at(count, (bi, bj), 1)
    cell = np.full((n_bins, n_bins), np.nan)
    key = bi * n_bins + bj
    order = np.argsort(key, kind="stable")
    uniq, starts = np.unique(key[order], return_index=True)
    bounds = np.append(starts, len(order))
    f = np.median if stat == "median" else np.mean
    for u, a, b in zip(uniq, bounds[:-1], bounds[1:]):
        cell[u // n_bins, u % n_bins] = f(price[order[a:b]])
    return HeatmapGrid(lat_edges, lon_edges, cell, count)


@dataclass
class Table:
    header: list[str]
    rows: list[Sequence]


@dataclass
class RunReport:
    """Machine-readable record of one run; each executed stage fills one section."""

    meta: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)

    def add_section(self, name: str, content: dict) -> None:
        if name not in SECTIONS or name in ("meta", "warnings"):
            raise DomainError(f"unknown report section {name!r}")
        if name in self.sections:
            raise DomainError(f"section {name!r} already present")
        self.sections[name] = content

    def warn(self, message: str) -> None:
        if message not in self.warnings:
            self.warnings.append(message)

    def to_dict(self) -> dict:
        out = {"meta": self.meta}
        for name in SECTIONS[1:-1]:
            out[name] = self.sections.get(name)
        out["warnings"] = list(self.warnings)
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_table(table: Table, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])


def emit_report(report: RunReport, out_dir) -> list[Path]:
    """Write report.json plus one CSV per table; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json"]
    paths[0].write_text(dumps(report.to_dict()), encoding="utf-8")
    for name in sorted(report.tables):
        p = out / f"{name}.csv"
        write_table(report.tables[name], p)
        paths.append(p)
    return paths
