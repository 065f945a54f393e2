import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airprice.errors import DegenerateDataError, DomainError
from airprice.learners import HyperParams
from airprice.select import (
    SearchSpace,
    format_top_k,
    group_kfold_split,
    kfold_split,
    r2_score,
    randomized_search,
    sample_params,
    trees_curve,
    write_search_results,
)
from airprice.synthetic import piecewise_regression

SMALL = SearchSpace(n_estimators=(3, 8), max_depth=(4, 8, None))


def test_kfold_examples():
    folds = kfold_split(10, 10, seed=0)
    assert sorted(len(f) for f in folds) == [1] * 10
    assert sorted(len(f) for f in kfold_split(10, 3, seed=0)) == [3, 3, 4]
    a, b = kfold_split(50, 5, seed=8), kfold_split(50, 5, seed=8)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_kfold_too_many_folds():
    with pytest.raises(DomainError):
        kfold_split(3, 4)


@given(st.integers(2, 200), st.integers(2, 12), st.integers(0, 1000))
def test_kfold_partition(n, k, seed):
    if k > n:
        return
    folds = kfold_split(n, k, seed)
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_group_folds_keep_groups_together():
    groups = np.repeat(np.arange(12), 3)
    for f in group_kfold_split(groups, 4, seed=1):
        for g in np.unique(groups[f]):
            assert np.sum(groups[f] == g) == 3


def test_r2_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert r2_score(y, y) == 1.0
    assert r2_score(y, np.full(3, 2.0)) == 0.0
    assert r2_score(y, [1, 2, 4]) == 0.5


def test_r2_constant_target():
    with pytest.raises(DegenerateDataError):
        r2_score([2, 2], [1, 3])


def test_sample_params_singleton_space():
    space = SearchSpace((150, 150), ("sqrt",), (12,), (5,), (2,), (False,))
    p = sample_params(space, np.random.default_rng(0))
    assert p == HyperParams(150, "sqrt", 12, 5, 2, False)


def test_sample_params_bootstrap_fraction():
    rng = np.random.default_rng(42)
    space = SearchSpace()
    draws = [sample_params(space, rng) for _ in range(10_000)]
    frac = np.mean([d.bootstrap for d in draws])
    assert 0.45 <= frac <= 0.55
    assert all(space.contains(d) for d in draws)


def test_search_single_trial(rng):
    X, y = piecewise_regression(120, seed=1)
    trials = randomized_search(X, y, SMALL, n_iter=1, k=3, seed=0)
    assert len(trials) == 1 and trials[0].rank == 1


def test_search_deterministic_and_ordered():
    X, y = piecewise_regression(150, seed=2)
    a = randomized_search(X, y, SMALL, n_iter=6, k=3, seed=5)
    b = randomized_search(X, y, SMALL, n_iter=6, k=3, seed=5)
    assert [t.to_dict() for t in a] == [t.to_dict() for t in b]
    means = [t.mean_score for t in a]
    assert means == sorted(means, reverse=True)
    assert a[0].mean_score >= np.median(means)


def test_top_k_layout():
    X, y = piecewise_regression(100, seed=3)
    text = format_top_k(randomized_search(X, y, SMALL, n_iter=4, k=3, seed=0), 3)
    blocks = text.strip().split("\n\n")
    assert len(blocks) == 3
    for i, block in enumerate(blocks, start=1):
        lines = block.splitlines()
        assert lines[0] == f"Model with rank: {i}"
        assert lines[1].startswith("Mean validation score: ") and "(std: " in lines[1]
        assert lines[2].startswith("Parameters: {'n_estimators': ")


def test_write_search_results(tmp_path):
    X, y = piecewise_regression(80, seed=3)
    trials = randomized_search(X, y, SMALL, n_iter=2, k=2, seed=0)
    write_search_results(trials, tmp_path / "s.json", tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().count("\n") == 3


def test_trees_curve_shape_and_determinism():
    X, y = piecewise_regression(150, seed=4)
    p = HyperParams(n_estimators=10)
    a = trees_curve(X, y, p, [1], k=3, seed=1)
    assert len(a) == 1 and a[0][0] == 1
    assert trees_curve(X, y, p, [1, 5], k=3, seed=1) == trees_curve(X, y, p, [5, 1], k=3, seed=1)
