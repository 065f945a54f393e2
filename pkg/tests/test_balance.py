import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airprice.balance import (
    BalanceConfig,
    balance_dataset,
    balance_indices,
    column_median,
    downsample,
    downsample_indices,
    upsample,
)
from airprice.errors import DomainError
from airprice.features import FeatureMatrix


def test_column_median_examples():
    assert column_median([[1, 10], [2, 20], [3, 30]]).tolist() == [2, 20]
    assert column_median([[1], [3]]).tolist() == [2]
    assert column_median([[4, 5]]).tolist() == [4, 5]


def test_upsample_examples():
    assert upsample(["r"], 100) == ["r"] * 100
    out = upsample(["r1", "r2", "r3"], 100)
    assert len(out) == 100 and out[:4] == ["r1", "r2", "r3", "r1"]
    rows = list(range(100))
    assert upsample(rows, 100) == rows


def test_downsample_hand_example():
    # median 2, distances [2, 1, 0, 1, 8]; 1 and 3 tie at distance 1, lower index wins
    kept = downsample([[0], [1], [2], [3], [10]], 3)
    assert sorted(kept[:, 0].tolist()) == [0, 1, 10]
    assert downsample_indices([[0], [1], [2], [3], [10]], 3).tolist() == [4, 0, 1]


def test_downsample_identical_rows_keeps_first():
    assert downsample_indices(np.ones((6, 2)), 3).tolist() == [0, 1, 2]


def test_downsample_nearest_mode():
    idx = downsample_indices([[0], [1], [2], [3], [10]], 2, "nearest_to_median")
    assert idx.tolist() == [2, 1]


def test_downsample_precondition():
    with pytest.raises(DomainError):
        downsample([[1], [2], [3]], 3)


@given(st.lists(st.integers(1, 30), min_size=1, max_size=25), st.integers(1, 12))
def test_every_listing_gets_target_rows(sizes, target):
    ids = np.repeat(np.arange(len(sizes)) * 7, sizes)
    values = np.arange(len(ids), dtype=float)[:, None] % 5
    index, summary = balance_indices(values, ids, BalanceConfig(target))
    counts = np.bincount(ids[index] // 7)
    assert counts.tolist() == [target] * len(sizes)
    assert summary.rows_out == target * len(sizes)
    # selection never crosses listings and never invents rows
    assert set(index.tolist()) <= set(range(len(ids)))


def test_balance_dataset_single_rows_and_big_group():
    ids = np.array([5] + [9] * 4000)
    values = np.random.default_rng(0).normal(size=(4001, 2))
    m = FeatureMatrix(values, ["a", "b"], np.zeros(4001), ids)
    out, summary = balance_dataset(m, BalanceConfig(100))
    assert out.n_rows == 200
    assert np.all(out.values[:100] == values[0])
    assert summary.upsampled == 1 and summary.downsampled == 1


def test_balance_ignores_target_for_distance():
    ids = np.zeros(5, dtype=int)
    values = np.array([[0.0], [1.0], [2.0], [3.0], [10.0]])
    a = balance_dataset(FeatureMatrix(values, ["x"], np.zeros(5), ids), BalanceConfig(3))[0]
    b = balance_dataset(FeatureMatrix(values, ["x"], np.arange(5.0) * 100, ids),
                        BalanceConfig(3))[0]
    assert a.values.tolist() == b.values.tolist()
