"""Equalize the number of rows per listing.

Rare listings are repeated cyclically; frequent ones are cut down to the rows
that lie farthest from (or nearest to) their per-column median row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from airprice.errors import DegenerateDataError, DomainError
from airprice.features import FeatureMatrix

ORDERS = ("farthest_from_median", "nearest_to_median")


@dataclass(frozen=True)
class BalanceConfig:
    target_per_listing: int = 100
    downsample_order: str = "farthest_from_median"
    distance_columns: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.target_per_listing < 1:
            raise DomainError("target_per_listing must be >= 1")
        if self.downsample_order not in ORDERS:
            raise DomainError(f"downsample_order must be one of {ORDERS}")


@dataclass
class BalanceSummary:
    n_listings: int = 0
    upsampled: int = 0
    downsampled: int = 0
    unchanged: int = 0
    rows_in: int = 0
    rows_out: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


def column_median(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[0] < 1:
        raise DomainError("column_median needs at least one row")
    return np.median(m, axis=0)


def upsample(rows, target: int):
    """Repeat rows cyclically (r1, r2, ..., rk, r1, ...) up to ``target``."""
    n = len(rows)
    if n == 0:
        raise DomainError("cannot upsample an empty set of rows")
    if n > target:
        raise DomainError(f"upsample needs len(rows) <= target ({n} > {target})")
    index = np.arange(target) % n
    if isinstance(rows, np.ndarray):
        return rows[index]
    return [rows[i] for i in index]


def downsample_indices(matrix, target: int, order: str = "farthest_from_median",
                       distance_columns=None) -> np.ndarray:
    """Indices of the ``target`` rows kept, in selection-rank order."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    n = m.shape[0]
    if n <= target:
        raise DomainError(f"downsample needs more rows than target ({n} <= {target})")
    if order not in ORDERS:
        raise DomainError(f"unknown downsample order {order!r}")
    if distance_columns is not None:
        m = m[:, list(distance_columns)]
    if not np.isfinite(m).all():
        raise DegenerateDataError("non-finite feature values in downsample input")
    dist = np.sqrt(((m - np.median(m, axis=0)) ** 2).sum(axis=1))
    key = -dist if order == "farthest_from_median" else dist
    # lexsort: last key is primary; row index breaks ties
    ranked = np.lexsort((np.arange(n), key))
    return ranked[:target]


def downsample(rows, target: int, config: BalanceConfig = BalanceConfig()):
    arr = np.asarray(rows, dtype=np.float64)
    return arr[downsample_indices(arr, target, config.downsample_order, config.distance_columns)]


def balance_indices(values: np.ndarray, listing_ids: np.ndarray,
                    config: BalanceConfig = BalanceConfig()) -> tuple[np.ndarray, BalanceSummary]:
    """Row indices of the balanced dataset, grouped by ascending listing id."""
    listing_ids = np.asarray(listing_ids)
    target = config.target_per_listing
    order = np.argsort(listing_ids, kind="stable")
    uniq, starts = np.unique(listing_ids[order], return_index=True)
    bounds = np.append(starts, len(order))
    summary = BalanceSummary(n_listings=len(uniq), rows_in=len(listing_ids))
    pieces = []
    for g in range(len(uniq)):
        members = order[bounds[g]:bounds[g + 1]]
        k = len(members)
        if k == target:
            summary.unchanged += 1
            pieces.append(members)
        elif k < target:
            summary.upsampled += 1
            pieces.append(upsample(members, target))
        else:
            summary.downsampled += 1
            pick = downsample_indices(values[members], target, config.downsample_order,
                                      config.distance_columns)
            pieces.append(members[pick])
    index = np.concatenate(pieces) if pieces else np.empty(0, dtype=np.int64)
    summary.rows_out = len(index)
    return index, summary


def balance_dataset(matrix: FeatureMatrix,
                    config: BalanceConfig = BalanceConfig()) -> tuple[FeatureMatrix, BalanceSummary]:
    """Every listing appears exactly ``target_per_listing`` times in the result.

    Distances use the encoded feature columns only; target and listing id
    never enter them.
    """
    index, summary = balance_indices(matrix.values, matrix.listing_ids, config)
    return matrix.take(index), summary
