import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airprice.errors import DomainError
from airprice.prob import (
    NBModel,
    fit_multinomial_nb,
    kmeans_1d,
    majority_baseline,
    nb_accuracy,
    normalize_availability,
    predict_nb,
    predict_proba_nb,
    split_low_high,
)
from airprice.synthetic import two_blob_availability


def test_normalize_examples():
    assert normalize_availability(15, 30) == 0.5
    assert normalize_availability(0, 365) == 0.0
    assert normalize_availability(365, 365) == 1.0


def test_normalize_rejects_overflow():
    with pytest.raises(DomainError):
        normalize_availability(31, 30)


def test_kmeans_symmetric_blobs():
    r = kmeans_1d([0.1, 0.1, 0.9, 0.9], 2)
    assert r.centroids.tolist() == [0.1, 0.9]
    assert r.assignments.tolist() == [0, 0, 1, 1]
    assert split_low_high(r) == ["low", "low", "high", "high"]


def test_kmeans_single_cluster_is_mean():
    v = [0.2, 0.4, 0.9]
    assert kmeans_1d(v, 1).centroids[0] == pytest.approx(np.mean(v))


def test_kmeans_recovers_generating_labels():
    days = two_blob_availability(90, 110, 365, seed=4)
    truth = np.r_[np.zeros(90), np.ones(110)]
    r = kmeans_1d(normalize_availability(days, 365), 2, seed=1)
    assert np.array_equal(r.assignments, truth)


def test_kmeans_degenerate_flag():
    r = kmeans_1d([0.5, 0.5, 0.5], 2)
    assert r.degenerate


@given(st.lists(st.floats(0, 1), min_size=2, max_size=60), st.integers(0, 50))
def test_kmeans_inertia_never_increases(values, seed):
    r = kmeans_1d(values, 2, seed=seed)
    h = r.inertia_history
    assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))
    assert np.all(np.diff(r.centroids) >= 0)


def test_nb_aligned_feature_hand_posterior():
    rows = [("a",)] * 10 + [("b",)] * 10
    labels = ["low"] * 10 + ["high"] * 10
    m = fit_multinomial_nb(rows, labels)
    assert predict_nb(m, [("a",), ("b",)]) == ["low", "high"]
    # P(a|low) = 11/13, P(a|high) = 1/13, equal priors -> 11/12
    p = predict_proba_nb(m, [("a",)])[0]
    assert p[m.classes.index("low")] == pytest.approx(11 / 12, abs=1e-14)


def test_nb_uninformative_predicts_majority():
    rows = [("x", "y")] * 7
    m = fit_multinomial_nb(rows, [1, 1, 1, 1, 0, 0, 0])
    assert predict_nb(m, rows) == [1] * 7


def test_nb_unseen_category_finite():
    m = fit_multinomial_nb([("a",), ("b",)], ["low", "high"])
    p = predict_proba_nb(m, [("zzz",)])
    assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("xy"), st.sampled_from("LH")),
                min_size=1, max_size=40),
       st.floats(0.1, 5))
def test_nb_posteriors_normalized(data, alpha):
    rows = [(a, b) for a, b, _ in data]
    labels = [c for _, _, c in data]
    m = fit_multinomial_nb(rows, labels, alpha)
    p = predict_proba_nb(m, rows + [("q", "q")])
    assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-12)


def test_nb_accuracy_rejects_unknown_labels():
    m = fit_multinomial_nb([("a",)], ["low"])
    with pytest.raises(DomainError):
        nb_accuracy(m, [("a",)], ["high"])


def test_nb_roundtrip():
    m = fit_multinomial_nb([("a", "x"), ("b", "y"), ("a", "y")], ["low", "high", "low"])
    back = NBModel.from_dict(json.loads(json.dumps(m.to_dict())))
    rows = [("a", "y"), ("c", "x")]
    assert np.allclose(predict_proba_nb(back, rows), predict_proba_nb(m, rows))


def test_majority_baseline_examples():
    assert majority_baseline([1, 1, 0]) == (1, pytest.approx(2 / 3))
    assert majority_baseline([4, 4]) == (4, 1.0)
    assert majority_baseline([1, 0]) == (0, 0.5)
