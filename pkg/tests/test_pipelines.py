import json
from dataclasses import replace

import numpy as np
import pytest

from airprice.config import RunConfig
from airprice.errors import DomainError, StageError
from airprice.features import FeatureMatrix
from airprice.learners import HyperParams
from airprice.pipelines import (
    AvailabilityModel,
    PricePipelineModel,
    availability_likelihood,
    baseline_stage,
    hypothesis1_run,
    hypothesis2_run,
    label_easy_hard,
    load_model,
    predict_price,
    save_model,
    train_gate,
)
from airprice.prob import predict_proba_nb
from airprice.report import dumps

FAST = dict(target_per_listing=8, n_iter=2, folds=3, search_space={"n_estimators": [5, 10]},
            gate_params={"n_estimators": 10})


def _matrix(X, target, ids):
    return FeatureMatrix(X, [f"x{i}" for i in range(X.shape[1])], target, ids)


def test_baseline_linear_data_is_exact(rng):
    X = rng.uniform(size=(60, 3))
    target = 3.0 + X @ np.array([0.5, -0.2, 0.8])
    base = baseline_stage(_matrix(X, target, np.arange(60)), k=5, seed=1)
    assert base.rmse_usd <= 1e-6 * np.expm1(target).mean()
    assert np.all(base.oof_errors_usd < 1e-6)


def test_baseline_deterministic(rng):
    X = rng.uniform(size=(40, 2))
    m = _matrix(X, X[:, 0] + rng.normal(size=40), np.arange(40))
    a, b = baseline_stage(m, 4, seed=3), baseline_stage(m, 4, seed=3)
    assert np.array_equal(a.oof_errors_usd, b.oof_errors_usd)


def test_label_easy_hard_examples():
    assert label_easy_hard([1], [2.0])[0].easy
    assert not label_easy_hard([1], [50.0])[0].easy
    g = label_easy_hard([4, 4], [10.0, 60.0])[0]
    assert g.oof_abs_error == 35.0 and not g.easy


def test_label_boundary_is_easy():
    assert label_easy_hard([1], [30.0], 30.0)[0].easy


def _separable(rng, n_listings=120, rows=3):
    ids = np.repeat(np.arange(n_listings), rows)
    base = rng.uniform(size=(n_listings, 3))
    X = base[ids] + 0.01 * rng.normal(size=(len(ids), 3))
    errors = np.where(X[:, 1] > 0.5, 80.0, 5.0)
    labels = label_easy_hard(ids, np.where(base[ids, 1] > 0.5, 80.0, 5.0))
    return _matrix(X, np.zeros(len(ids)), ids), labels, errors


def test_gate_separable(rng):
    m, labels, _ = _separable(rng)
    gate = train_gate(m, labels, HyperParams(n_estimators=25), seed=0)
    assert gate.holdout_accuracy >= 0.95
    d = gate.distributions["x1"]
    assert sum(d["easy"]) + sum(d["hard"]) == m.n_rows


def test_gate_all_easy(rng):
    m, _, _ = _separable(rng, 30)
    labels = label_easy_hard(m.listing_ids, np.zeros(m.n_rows))
    assert train_gate(m, labels, HyperParams(n_estimators=5)).holdout_accuracy == 1.0


@pytest.fixture(scope="module")
def trained(sample_records, sample_calendar):
    return hypothesis1_run(sample_records, RunConfig(seed=4, **FAST), sample_calendar)


def test_hypothesis1_sections(trained):
    model, report = trained
    d = report.to_dict()
    for key in ("eda", "baseline", "gate", "balance", "search", "final"):
        assert d[key] is not None
    assert d["availability"] is None
    assert d["meta"]["dataset_fingerprint"] == model.metadata["dataset_fingerprint"]
    assert d["final"]["group_folds"]["fold_mode"] == "group"
    assert any("row-level folds" in w for w in d["warnings"])


def test_hypothesis1_reproducible(trained, sample_records, sample_calendar):
    model, report = trained
    again, report2 = hypothesis1_run(sample_records, RunConfig(seed=4, **FAST), sample_calendar)
    assert dumps(model.to_dict()) == dumps(again.to_dict())
    assert dumps(report.to_dict()) == dumps(report2.to_dict())


def test_stage_error_names_stage(sample_records):
    with pytest.raises(StageError) as err:
        hypothesis1_run(sample_records[:2], RunConfig(**FAST))
    assert err.value.stage == "outliers"


def test_predict_price_batch_and_unseen(trained, sample_records):
    model, _ = trained
    batch = sample_records[:5]
    out = predict_price(model, batch)
    assert [p.listing_id for p in out] == [r.listing_id for r in batch]
    odd = predict_price(model, replace(batch[0], room_type="Yurt", zipcode="00000"))
    assert np.isfinite(odd.price) and odd.price >= 0
    assert odd.verdict in ("easy", "hard")


def test_predict_memorizing_config_recovers_price(sample_records):
    recs = [r for r in sample_records if r.price < 400][:30]
    recs = list({r.listing_id: r for r in recs}.values())
    cfg = RunConfig(seed=1, target_per_listing=1, n_iter=1, folds=3, price_upper_quantile=1.0,
                    max_bedrooms=10,
                    search_space={"n_estimators": [1, 1], "bootstrap": [False],
                                  "max_features": ["auto"], "max_depth": [None],
                                  "min_samples_split": [2], "min_samples_leaf": [1]},
                    gate_params={"n_estimators": 3})
    model, _ = hypothesis1_run(recs, cfg)
    got = [p.price for p in predict_price(model, recs)]
    assert got == pytest.approx([r.price for r in recs], rel=1e-9)


def test_model_roundtrip(tmp_path, trained, sample_records):
    model, _ = trained
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert isinstance(back, PricePipelineModel)
    assert predict_price(back, sample_records[:3]) == predict_price(model, sample_records[:3])


def test_model_rejects_mismatched_encoding(trained):
    d = json.loads(dumps(trained[0].to_dict()))
    d["encoding"]["categorical_columns"] = []
    with pytest.raises(DomainError):
        PricePipelineModel.from_dict(d)


def test_hypothesis2_zipcode_signal(sample_records):
    model, report = hypothesis2_run(sample_records, 365, RunConfig(seed=2))
    sec = report.sections["availability"]
    assert set(sec["windows"]) == {"30", "60", "90", "365"}
    assert sec["nb_accuracy"] >= sec["majority_accuracy"] + 0.2
    assert model.centroid_low < model.centroid_high


def test_availability_likelihood(sample_records, tmp_path):
    model, _ = hypothesis2_run(sample_records, 90, RunConfig(seed=2))
    high_zip = next(r.zipcode for r in sample_records if r.availability_90 > 70)
    p = availability_likelihood(model, high_zip, "Private room")
    assert 0.5 < p <= 1.0
    proba = predict_proba_nb(model.nb, [(high_zip, "Private room")])[0]
    assert proba.sum() == pytest.approx(1.0, abs=1e-12)
    unseen = availability_likelihood(model, "99999", "Treehouse")
    assert 0.0 <= unseen <= 1.0
    save_model(model, tmp_path / "a.json")
    assert isinstance(load_model(tmp_path / "a.json"), AvailabilityModel)
