"""Acceptance gate: one recorded PASS/FAIL line per criterion, at the stated tolerances."""

import json
import re
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from airprice.balance import BalanceConfig, balance_dataset, downsample_indices
from airprice.cli import main
from airprice.config import REFERENCE_PARAMS, RunConfig
from airprice.features import FeatureMatrix
from airprice.learners import HyperParams, best_split, feature_importances, fit_forest, fit_ols
from airprice.pipelines import baseline_stage, hypothesis2_run, label_easy_hard, train_gate
from airprice.prob import (
    fit_multinomial_nb,
    kmeans_1d,
    normalize_availability,
    predict_proba_nb,
)
from airprice.report import error_buckets, mape, rmse
from airprice.select import SearchSpace, r2_score, randomized_search, trees_curve
from airprice.synthetic import piecewise_regression, synthetic_listings, two_blob_availability

ROOT = Path(__file__).resolve().parents[1]
SAMPLE_CONFIG = ROOT / "data" / "sample" / "config.json"


# --- 1: split search vs exhaustive enumeration --------------------------------------

def _impurity(y, task):
    if task == "regression":
        return float(np.var(y))
    _, counts = np.unique(y, return_counts=True)
    p = counts / len(y)
    return 1.0 - float((p * p).sum())


def brute_force_split(X, y, task):
    """Every (feature, midpoint) pair scored directly from child impurities."""
    n, p = X.shape
    parent = _impurity(y, task)
    cands = []
    for f in range(p):
        values = np.unique(X[:, f])
        for a, b in zip(values, values[1:]):
            t = 0.5 * (a + b)
            if t >= b:
                t = a
            left = X[:, f] <= t
            gain = parent - (left.sum() * _impurity(y[left], task)
                             + (~left).sum() * _impurity(y[~left], task)) / n
            cands.append((gain, f, t))
    if not cands:
        return None
    top = max(g for g, _, _ in cands)
    if top <= 1e-12 * parent or parent == 0:
        return None
    tied = [(f, t, g) for g, f, t in cands if g >= top - 1e-9 * top]
    return (*min(tied), len(tied))


def test_c01_split_oracle(criterion):
    rng = np.random.default_rng(101)
    mismatches, ties = [], 0
    start = time.perf_counter()
    for case in range(200):
        n, p = int(rng.integers(2, 31)), int(rng.integers(1, 4))
        task = "regression" if case % 2 == 0 else "classification"
        # coarse integer grids make exact gain ties common
        X = rng.integers(0, 5, size=(n, p)).astype(float)
        y = rng.integers(0, 3 if task == "classification" else 6, size=n)
        got = best_split(X, y.astype(float) if task == "regression" else y, task=task)
        want = brute_force_split(X, y.astype(float), task)
        ties += want is not None and want[3] > 1
        ok = (got is None and want is None) or (
            got is not None and want is not None and got.feature == want[0]
            and got.threshold == want[1] and abs(got.gain - want[2]) <= 1e-12 * max(1, want[2]))
        if not ok:
            mismatches.append((case, got, want))
    elapsed = time.perf_counter() - start
    criterion(1, "best_split == brute force (200 cases)",
              not mismatches and elapsed < 5.0,
              f"mismatches={len(mismatches)} tied_optima={ties} time={elapsed:.2f}s")


# --- 2: OLS vs normal equations -----------------------------------------------------

def test_c02_ols_oracle(criterion):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        X = rng.normal(size=(50, 5))
        y = X @ rng.normal(size=5) + rng.normal() + rng.normal(size=50)
        A = np.hstack([np.ones((50, 1)), X])
        oracle = np.linalg.solve(A.T @ A, A.T @ y)
        m = fit_ols(X, y)
        got = np.r_[m.intercept, m.coefficients]
        worst = max(worst, float(np.max(np.abs(got - oracle) / np.maximum(np.abs(oracle), 1e-300))))
    criterion(2, "fit_ols == normal equations (100 systems, 1e-8 rel)", worst <= 1e-8,
              f"max_rel_err={worst:.2e}")


# --- 3: downsampling vs sorted (distance, index) ------------------------------------

def test_c03_downsample_oracle(criterion):
    rng = np.random.default_rng(303)
    bad = 0
    for trial in range(500):
        n = int(rng.integers(2, 13))
        target = int(rng.integers(1, min(5, n - 1) + 1))
        p = int(rng.integers(1, 4))
        rows = rng.integers(0, 4, size=(n, p)).astype(float)
        med = np.median(rows, axis=0)
        dist = [float(np.sqrt(((r - med) ** 2).sum())) for r in rows]
        for order in ("farthest_from_median", "nearest_to_median"):
            sign = -1 if order == "farthest_from_median" else 1
            oracle = [i for _, i in sorted((sign * d, i) for i, d in enumerate(dist))][:target]
            bad += downsample_indices(rows, target, order).tolist() != oracle
    criterion(3, "downsample == brute-force selection (500 trials x 2 modes)", bad == 0,
              f"mismatches={bad}")


# --- 4: balancing at scale ----------------------------------------------------------

def test_c04_balancing_scale(criterion):
    rng = np.random.default_rng(404)
    sizes = np.floor(np.exp(rng.uniform(0, np.log(4001), 7000))).astype(np.int64).clip(1, 4000)
    sizes[0], sizes[1] = 1, 4000
    ids = np.repeat(np.arange(7000), sizes)
    values = rng.normal(size=(len(ids), 3))
    m = FeatureMatrix(values, ["a", "b", "c"], np.zeros(len(ids)), ids)
    start = time.perf_counter()
    out, _ = balance_dataset(m, BalanceConfig(100))
    elapsed = time.perf_counter() - start
    spike = np.bincount(np.bincount(out.listing_ids))
    ok = out.n_rows == 700_000 and spike[100] == 7000 and spike.sum() - spike[0] == 7000 \
        and elapsed < 60
    criterion(4, "7000 listings -> exactly 100 rows each", ok,
              f"rows_in={len(ids)} rows_out={out.n_rows} time={elapsed:.1f}s")


# --- 5, 6: forest quality and trees curve on piecewise data -------------------------

@pytest.fixture(scope="module")
def piecewise():
    return piecewise_regression(5000, p=6, noise=0.1, seed=505)


@pytest.mark.slow
def test_c05_forest_quality(criterion, piecewise):
    X, y = piecewise
    start = time.perf_counter()
    trials = randomized_search(X, y, SearchSpace(), n_iter=20, k=10, seed=5)
    best = trials[0]
    forest = fit_forest(X, y, best.params, seed=5)
    top3 = {name for name, _ in feature_importances(forest, [f"x{i}" for i in range(6)])[:3]}
    elapsed = time.perf_counter() - start
    criterion(5, "rank-1 10-fold mean R^2 >= 0.9 and informative features on top",
              best.mean_score >= 0.9 and top3 == {"x0", "x2", "x4"},
              f"r2={best.mean_score:.4f} top3={sorted(top3)} time={elapsed:.0f}s")


def test_c06_trees_curve(criterion, piecewise):
    X, y = piecewise
    curve = dict((n, te) for n, _, te in trees_curve(X, y, HyperParams(**REFERENCE_PARAMS),
                                                     [1, 50], k=10, seed=6))
    criterion(6, "held-out RMSE(50 trees) <= RMSE(1 tree)", curve[50] <= curve[1],
              f"rmse1={curve[1]:.4f} rmse50={curve[50]:.4f}")


# --- 7: easy/hard gate --------------------------------------------------------------

def test_c07_gate(criterion):
    rng = np.random.default_rng(707)
    n_listings, rows = 300, 4
    ids = np.repeat(np.arange(n_listings), rows)
    base = rng.uniform(size=(n_listings, 3))
    X = base[ids] + 0.005 * rng.normal(size=(len(ids), 3))
    hard = base[ids, 0] > 0.5
    log_price = 4.5 + 0.5 * X[:, 1] + 0.3 * X[:, 2]
    # hard listings swing between double and half price from one snapshot to the next
    swing = np.where(np.arange(len(ids)) % 2 == 0, np.log(2.0), -np.log(2.0))
    m = FeatureMatrix(X, ["x0", "x1", "x2"], log_price + hard * swing, ids)
    cfg = RunConfig()
    base_res = baseline_stage(m, k=10, seed=7)
    labels = label_easy_hard(ids, base_res.oof_errors_usd, cfg.gate_threshold)
    truth = {i: not (base[i, 0] > 0.5) for i in range(n_listings)}
    label_match = np.mean([g.easy == truth[g.listing_id] for g in labels])
    gate = train_gate(m, labels, HyperParams(n_estimators=50), seed=7)
    buckets = error_buckets(base_res.oof_errors_usd, cfg.bucket_thresholds)
    p = buckets.cumulative_percentages
    ok = (gate.holdout_accuracy >= 0.9 and all(a <= b for a, b in zip(p, p[1:]))
          and buckets.thresholds == [5.0, 10.0, 20.0, 30.0])
    criterion(7, "gate holdout accuracy >= 0.9, buckets cumulative at {5,10,20,30}", ok,
              f"acc={gate.holdout_accuracy:.3f} label_agreement={label_match:.3f} "
              f"buckets={[round(v, 2) for v in p]}")


# --- 8: availability ----------------------------------------------------------------

def _availability_records(labels, zips, rooms, seed):
    rng = np.random.default_rng(seed)
    template = synthetic_listings(1, 1, seed=0)[0]
    out = []
    for i, (high, z, r) in enumerate(zip(labels, zips, rooms)):
        frac = float(np.clip(rng.normal(0.85 if high else 0.15, 0.04), 0, 1))
        days = {w: int(round(frac * w)) for w in (30, 60, 90, 365)}
        out.append(replace(template, listing_id=i, zipcode=z, room_type=r,
                           availability_30=days[30], availability_60=days[60],
                           availability_90=days[90], availability_365=days[365]))
    return out


def test_c08_availability(criterion):
    exact = True
    for w in (30, 60, 90, 365):
        days = two_blob_availability(120, 80, w, seed=w)
        r = kmeans_1d(normalize_availability(days, w), 2, seed=8)
        exact &= np.array_equal(r.assignments, np.r_[np.zeros(120), np.ones(80)])
        exact &= bool(r.centroids[0] < r.centroids[1])

    rng = np.random.default_rng(808)
    zips = rng.choice(["94102", "94103", "94107", "94110"], 400).tolist()
    labels = [z in ("94102", "94107") for z in zips]
    rooms = rng.choice(["Entire home/apt", "Private room"], 400).tolist()
    model, rep = hypothesis2_run(_availability_records(labels, zips, rooms, 1), 365,
                                 RunConfig(seed=8))
    informed = rep.sections["availability"]
    windows_ok = all(v["centroid_low"] < v["centroid_high"]
                     for v in informed["windows"].values())

    labels = (rng.uniform(size=2000) < 0.7).tolist()
    zips = rng.choice(["94102", "94103", "94107", "94110"], 2000).tolist()
    rooms = rng.choice(["Entire home/apt", "Private room", "Shared room"], 2000).tolist()
    _, rep = hypothesis2_run(_availability_records(labels, zips, rooms, 2), 365,
                             RunConfig(seed=8))
    flat = rep.sections["availability"]
    gain = informed["nb_accuracy"] - informed["majority_accuracy"]
    diff = abs(flat["nb_accuracy"] - flat["majority_accuracy"])
    ok = exact and windows_ok and gain >= 0.2 and diff <= 0.01
    criterion(8, "k-means exact, NB +0.2 when informative, = majority when not", ok,
              f"kmeans_exact={exact} gain={gain:.3f} uninformative_diff={diff:.3f}")


# --- 9: metric identities -----------------------------------------------------------

def test_c09_metric_identities(criterion):
    rng = np.random.default_rng(909)
    worst = {"r2_self": 0.0, "r2_mean": 0.0, "rmse": 0.0, "mape": 0.0, "posterior": 0.0}
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        y = rng.normal(scale=10 ** rng.uniform(-2, 3), size=n) + rng.normal(scale=100)
        if np.ptp(y) == 0:
            continue
        worst["r2_self"] = max(worst["r2_self"], abs(r2_score(y, y) - 1.0))
        worst["r2_mean"] = max(worst["r2_mean"], abs(r2_score(y, np.full(n, y.mean()))))
        worst["rmse"] = max(worst["rmse"], rmse(y, y))
        pos = np.abs(y) + 0.01
        worst["mape"] = max(worst["mape"], mape(pos, pos))
        rows = [tuple(r) for r in rng.integers(0, 4, size=(n, 2)).tolist()]
        nb = fit_multinomial_nb(rows, rng.integers(0, 3, n).tolist(), rng.uniform(0.1, 3))
        probe = rows + [(9, 9)]
        worst["posterior"] = max(worst["posterior"],
                                 float(np.max(np.abs(predict_proba_nb(nb, probe).sum(1) - 1))))
    ok = (worst["r2_self"] == 0 and worst["r2_mean"] <= 1e-12 and worst["rmse"] == 0
          and worst["mape"] == 0 and worst["posterior"] <= 1e-12)
    criterion(9, "metric identities over 1000 random vectors", ok,
              " ".join(f"{k}={v:.1e}" for k, v in worst.items()))


# --- 10: CLI determinism on the bundled sample --------------------------------------

def test_c10_train_determinism(criterion, tmp_path):
    times, outs = [], []
    for run in ("a", "b"):
        start = time.perf_counter()
        code = main(["train", "--config", str(SAMPLE_CONFIG), "--seed", "7",
                     "--out", str(tmp_path / run)])
        times.append(time.perf_counter() - start)
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())
                     if not p.name.startswith(".")})
    same = outs[0] == outs[1] and "model.json" in outs[0] and "report.json" in outs[0]
    criterion(10, "train --seed 7 twice -> byte-identical artifacts, < 30 s",
              same and max(times) < 30,
              f"files={len(outs[0])} identical={same} time={max(times):.1f}s")


# --- 11: tune output layout and grid membership -------------------------------------

def test_c11_tune_format(criterion, tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({
        "listings": str(ROOT / "data" / "sample" / "listings.csv"),
        "target_per_listing": 10, "n_iter": 5, "folds": 3}))
    assert main(["tune", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    block = re.compile(
        r"Model with rank: (\d+)\n"
        r"Mean validation score: -?\d+\.\d{3} \(std: \d+\.\d{3}\)\n"
        r"Parameters: (\{.*\})\n")
    found = block.findall(text)
    grid = SearchSpace()
    layout_ok = [int(r) for r, _ in found] == [1, 2, 3]
    for _, params in found:
        d = eval(params)  # the block prints a Python dict literal
        layout_ok &= list(d) == ["n_estimators", "min_samples_split", "min_samples_leaf",
                                 "max_features", "max_depth", "bootstrap"]
    trials = json.loads((tmp_path / "search.json").read_text())
    in_grid = all(grid.contains(HyperParams(**t["params"])) for t in trials)
    lo, hi = grid.n_estimators
    grid_ok = (lo, hi) == (100, 200) and set(grid.max_features) == {"auto", "sqrt"} \
        and set(grid.max_depth) == set(range(10, 21)) | {None} \
        and set(grid.min_samples_split) == {2, 5, 10} and set(grid.min_samples_leaf) == {1, 2, 4} \
        and set(grid.bootstrap) == {True, False}
    criterion(11, "tune prints the top-3 block; sampled params lie in the grid",
              layout_ok and in_grid and grid_ok,
              f"blocks={len(found)} trials={len(trials)} in_grid={in_grid}")
