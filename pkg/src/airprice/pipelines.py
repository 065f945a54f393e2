"""End-to-end price and availability workflows."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from airprice import __version__
from airprice.balance import balance_dataset
from airprice.config import RunConfig
from airprice.errors import DegenerateDataError, DomainError, StageError
from airprice.features import (
    EncodingSpec,
    FeatureMatrix,
    correlation_matrix,
    encode,
    encode_features,
    filter_outliers,
    fit_encoding,
    weekend_median_comparison,
)
from airprice.ingest import WINDOWS, CalendarEntry, ListingRecord
from airprice.learners import (
    Forest,
    HyperParams,
    LinearModel,
    feature_importances,
    fit_forest,
    fit_ols,
    independent_columns,
    predict_forest,
    predict_linear,
)
from airprice.prob import (
    NBModel,
    fit_multinomial_nb,
    kmeans_1d,
    nb_accuracy,
    normalize_availability,
    predict_proba_nb,
    split_low_high,
)
from airprice.report import (
    RunReport,
    Table,
    error_buckets,
    heatmap_grid,
    histogram,
    mape,
    rmse,
)
from airprice.select import (
    cross_val_predict,
    format_top_k,
    make_folds,
    randomized_search,
    train_index,
)

log = logging.getLogger(__name__)
SCHEMA_VERSION = 1
EASY, HARD = "easy", "hard"
LEAKAGE_WARNING = ("row-level folds on balanced data put copies of one listing in both "
                   "train and validation folds; search scores are optimistic")


def _stage(name: str, fn: Callable, *args, **kwargs):
    log.info("stage %s", name)
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def config_echo(config: RunConfig) -> dict:
    """Config as recorded in reports; the output directory is left out so reruns compare equal."""
    d = config.to_dict()
    d.pop("out", None)
    return d


def fingerprint(matrix: FeatureMatrix) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(matrix.column_names).encode())
    for a in (matrix.values, matrix.target, matrix.listing_ids):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def to_usd(log_price):
    return np.expm1(np.asarray(log_price, dtype=np.float64))


def _error_section(y_usd: np.ndarray, pred_usd: np.ndarray, thresholds) -> dict:
    pos = y_usd > 0
    return {
        "n": int(len(y_usd)),
        "rmse_usd": rmse(y_usd, pred_usd),
        "mape_pct": mape(y_usd[pos], pred_usd[pos]) if pos.any() else None,
        "mape_rows_excluded_zero_price": int((~pos).sum()),
        "buckets": error_buckets(np.abs(pred_usd - y_usd), thresholds).to_dict(),
    }


def _histogram_table(values, bins=20) -> Table:
    edges, counts = histogram(values, bins)
    return Table(["bin_left", "bin_right", "count"],
                 [(edges[i], edges[i + 1], int(c)) for i, c in enumerate(counts)])


def _bucket_table(errors, thresholds) -> Table:
    return Table(["threshold_usd", "percentage"],
                 [(t, p) for t, p in zip(*error_buckets(errors, thresholds).to_dict().values())])


# --- exploratory stage ---------------------------------------------------------------

def eda_stage(records: Sequence[ListingRecord], report: RunReport, config: RunConfig,
              calendar: Sequence[CalendarEntry] | None = None) -> dict:
    prices = np.array([r.price for r in records], dtype=np.float64)
    bedrooms = np.array([r.bedrooms for r in records], dtype=np.float64)
    section: dict = {"n_records": len(records)}
    if len(records):
        section["price_quantiles"] = {str(q): float(np.quantile(prices, q))
                                      for q in (0.5, 0.9, 0.95, 0.99, 1.0)}
        section["share_bedrooms_below_4"] = float(np.mean(bedrooms < 4))
        report.tables["hist_price"] = _histogram_table(prices)
        report.tables["hist_bedrooms"] = _histogram_table(
            bedrooms, np.arange(0, max(bedrooms.max(), 1) + 2))
        report.tables["hist_log_price"] = _histogram_table(np.log1p(prices))
        grid = heatmap_grid([r.latitude for r in records], [r.longitude for r in records],
                            prices, config.heatmap_bins)
        report.tables["heatmap"] = Table(
            ["lat_lo", "lat_hi", "lon_lo", "lon_hi", "count", "median_price"], grid.rows())
        spec = fit_encoding(records)
        if len(records) >= 2:
            m = encode(records, spec)
            names = [n for n, _ in spec.numeric_columns]
            cols = np.column_stack([m.values[:, :len(names)], prices])
            corr = correlation_matrix(cols)
            names = names + ["price"]
            report.tables["correlation"] = Table(
                ["column"] + names, [[names[i]] + corr[i].tolist() for i in range(len(names))])
            with_price = {n: (None if math.isnan(c) else c) for n, c in zip(names, corr[-1])}
            section["price_correlation"] = with_price
            section["strong_correlations"] = sorted(
                n for n, c in with_price.items() if n != "price" and c is not None and abs(c) > 0.5)
    if calendar:
        rows = []
        for balanced in (False, True):
            try:
                wd, we = weekend_median_comparison(calendar, balanced, config.seed)
            except DegenerateDataError as exc:
                report.warn(f"weekday/weekend comparison skipped: {exc}")
                break
            rows.append(("balanced" if balanced else "imbalanced", wd, we))
        if rows:
            section["weekday_weekend_median"] = {r[0]: {"weekday": r[1], "weekend": r[2]}
                                                 for r in rows}
            report.tables["weekday_weekend"] = Table(
                ["dataset", "weekday_median_usd", "weekend_median_usd"], rows)
    return section


# --- price workflow -----------------------------------------------------------------

@dataclass
class BaselineResult:
    model: LinearModel
    oof_pred: np.ndarray  # log space
    oof_errors_usd: np.ndarray
    rmse_usd: float
    mape_pct: float | None


def _fit_ols_full(X: np.ndarray, y: np.ndarray) -> LinearModel:
    """OLS on an independent column subset, expanded back to full width with zeros."""
    keep = independent_columns(X)
    coef = np.zeros(X.shape[1])
    if keep:
        sub = fit_ols(X[:, keep], y)
        coef[keep] = sub.coefficients
        return LinearModel(coef, sub.intercept)
    return LinearModel(coef, float(np.mean(y)))


def baseline_stage(matrix: FeatureMatrix, k: int = 10, seed: int = 0,
                   fold_mode: str = "row") -> BaselineResult:
    """Linear baseline with out-of-fold USD errors.

    One-hot blocks are collinear with the intercept, so each fit keeps a
    greedy full-rank subset of columns.
    """
    X, y = matrix.values, matrix.target
    folds = make_folds(len(y), k, seed, fold_mode, matrix.listing_ids)
    oof = np.empty(len(y))
    for i, test in enumerate(folds):
        train = train_index(folds, i)
        oof[test] = predict_linear(_fit_ols_full(X[train], y[train]), X[test])
    y_usd, pred_usd = to_usd(y), to_usd(oof)
    errors = np.abs(pred_usd - y_usd)
    pos = y_usd > 0
    return BaselineResult(_fit_ols_full(X, y), oof, errors, rmse(y_usd, pred_usd),
                          mape(y_usd[pos], pred_usd[pos]) if pos.any() else None)


@dataclass(frozen=True)
class GateLabel:
    listing_id: int
    oof_abs_error: float
    easy: bool
    threshold: float


def label_easy_hard(listing_ids, errors, threshold_usd: float = 30.0) -> list[GateLabel]:
    """Per-listing mean absolute OOF error against the threshold (easy iff <=)."""
    ids = np.asarray(listing_ids)
    e = np.asarray(errors, dtype=np.float64)
    if ids.shape != e.shape:
        raise DomainError("listing_ids and errors differ in length")
    out = []
    for lid in np.unique(ids):
        mean_err = float(e[ids == lid].mean())
        out.append(GateLabel(int(lid), mean_err, mean_err <= threshold_usd, float(threshold_usd)))
    return out


@dataclass
class GateResult:
    forest: Forest
    holdout_accuracy: float
    n_holdout: int
    distributions: dict = field(default_factory=dict)


def listing_holdout(listing_ids, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Row indices (train, holdout) with whole listings held out."""
    ids = np.asarray(listing_ids)
    uniq = np.unique(ids)
    n_hold = int(math.ceil(fraction * len(uniq))) if fraction > 0 else 0
    if n_hold >= len(uniq):
        n_hold = len(uniq) - 1
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    held = set(rng.permutation(uniq)[:n_hold].tolist())
    mask = np.array([i in held for i in ids.tolist()], dtype=bool)
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def train_gate(matrix: FeatureMatrix, labels: Sequence[GateLabel],
               params: HyperParams = HyperParams(), seed: int = 0,
               holdout_fraction: float = 0.2, bins: int = 10) -> GateResult:
    """Easy/hard classifier over listing rows, scored on held-out listings.

    Also returns per-feature histograms of easy vs hard rows on shared edges.
    """
    verdict = {g.listing_id: (EASY if g.easy else HARD) for g in labels}
    y = np.array([verdict[int(i)] for i in matrix.listing_ids])
    train, hold = listing_holdout(matrix.listing_ids, holdout_fraction, seed)
    forest = fit_forest(matrix.values[train], y[train], params, seed, task="classification")
    if len(hold):
        acc = float(np.mean(predict_forest(forest, matrix.values[hold]) == y[hold]))
    else:
        acc = float(np.mean(predict_forest(forest, matrix.values) == y))
    dists = {}
    for j, name in enumerate(matrix.column_names):
        col = matrix.values[:, j]
        edges, _ = histogram(col, bins)
        easy_counts = np.histogram(col[y == EASY], edges)[0]
        hard_counts = np.histogram(col[y == HARD], edges)[0]
        dists[name] = {"edges": edges.tolist(), "easy": easy_counts.tolist(),
                       "hard": hard_counts.tolist()}
    return GateResult(forest, acc, int(len(hold)), dists)


@dataclass
class PricePipelineModel:
    encoding: EncodingSpec
    baseline: LinearModel
    gate: Forest
    price_model: Forest
    chosen_params: HyperParams
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "price_pipeline",
            "encoding": self.encoding.to_dict(),
            "baseline": self.baseline.to_dict(),
            "gate": self.gate.to_dict(),
            "price_model": self.price_model.to_dict(),
            "chosen_params": self.chosen_params.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PricePipelineModel":
        if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") != "price_pipeline":
            raise DomainError("not a price pipeline artifact of a supported version")
        model = cls(EncodingSpec.from_dict(d["encoding"]), LinearModel.from_dict(d["baseline"]),
                    Forest.from_dict(d["gate"]), Forest.from_dict(d["price_model"]),
                    HyperParams.from_dict(d["chosen_params"]), d["metadata"])
        n = len(model.encoding.column_names)
        if model.gate.n_features != n or model.price_model.n_features != n:
            raise DomainError("artifact encoding does not match its forests' feature count")
        return model


@dataclass(frozen=True)
class PricePrediction:
    listing_id: int
    price: float
    verdict: str
    note: str


def predict_price(model: PricePipelineModel, records) -> list[PricePrediction] | PricePrediction:
    """Price in USD plus the easy/hard verdict for one record or a batch (order kept)."""
    single = isinstance(records, ListingRecord)
    batch = [records] if single else list(records)
    if not batch:
        return []
    X = encode_features(batch, model.encoding)
    verdicts = predict_forest(model.gate, X)
    prices = to_usd(predict_forest(model.price_model, X))
    t = model.metadata.get("gate_threshold", 30.0)
    out = []
    for rec, v, p in zip(batch, verdicts, prices):
        note = (f"typical error within USD {t:g}" if v == EASY
                else f"hard to predict: error likely above USD {t:g}")
        out.append(PricePrediction(rec.listing_id, float(p), str(v), note))
    return out[0] if single else out


def _eval_section(balanced: FeatureMatrix, params: HyperParams, config: RunConfig,
                  fold_mode: str, easy_ids: set, report: RunReport) -> dict:
    folds = make_folds(balanced.n_rows, config.folds, config.seed, fold_mode,
                       balanced.listing_ids)
    scores, oof = cross_val_predict(balanced.values, balanced.target, params, folds,
                                    config.seed, salt=10_000)
    y_usd, p_usd = to_usd(balanced.target), to_usd(oof)
    sec = _error_section(y_usd, p_usd, config.bucket_thresholds)
    sec["fold_mode"] = fold_mode
    sec["mean_r2"] = float(np.mean(scores))
    sec["std_r2"] = float(np.std(scores))
    easy = np.array([int(i) in easy_ids for i in balanced.listing_ids])
    sec["easy_subset"] = _error_section(y_usd[easy], p_usd[easy], config.bucket_thresholds) \
        if easy.any() else None
    errors = np.abs(p_usd - y_usd)
    report.tables[f"final_errors_{fold_mode}"] = _histogram_table(errors)
    report.tables[f"final_buckets_{fold_mode}"] = _bucket_table(errors, config.bucket_thresholds)
    return sec


def hypothesis1_run(records: Sequence[ListingRecord], config: RunConfig = RunConfig(),
                    calendar: Sequence[CalendarEntry] | None = None,
                    report: RunReport | None = None) -> tuple[PricePipelineModel, RunReport]:
    """outliers -> encode -> baseline -> easy/hard gate -> balance -> search -> final forest."""
    report = report or RunReport()
    seed = config.seed
    report.meta.update({"version": __version__, "seed": seed, "config": config_echo(config)})

    report.add_section("eda", _stage("eda", eda_stage, records, report, config, calendar))
    kept, outliers = _stage("outliers", filter_outliers, records, config.outlier_rules())
    if len(kept) < config.folds:
        raise StageError("outliers", DegenerateDataError(
            f"{len(kept)} rows left after outlier filtering; need at least {config.folds}"))
    spec = _stage("encode", fit_encoding, kept, rules=config.outlier_rules())
    matrix = _stage("encode", encode, kept, spec)
    fp = fingerprint(matrix)
    report.meta["dataset_fingerprint"] = fp
    report.sections["eda"]["outliers"] = outliers.to_dict()

    base = _stage("baseline", baseline_stage, matrix, config.folds, seed, config.fold_mode)
    report.add_section("baseline", {
        "rmse_usd": base.rmse_usd,
        "mape_pct": base.mape_pct,
        "buckets": error_buckets(base.oof_errors_usd, config.bucket_thresholds).to_dict(),
        "n_rows": matrix.n_rows,
        "n_features": len(matrix.column_names),
    })
    report.tables["baseline_errors"] = _histogram_table(base.oof_errors_usd)
    report.tables["baseline_buckets"] = _bucket_table(base.oof_errors_usd,
                                                      config.bucket_thresholds)

    labels = _stage("gate", label_easy_hard, matrix.listing_ids, base.oof_errors_usd,
                    config.gate_threshold)
    gate = _stage("gate", train_gate, matrix, labels, config.gate_hyperparams(), seed,
                  config.gate_holdout_fraction)
    easy_ids = {g.listing_id for g in labels if g.easy}
    report.add_section("gate", {
        "threshold_usd": config.gate_threshold,
        "n_listings": len(labels),
        "n_easy": len(easy_ids),
        "holdout_accuracy": gate.holdout_accuracy,
        "n_holdout_rows": gate.n_holdout,
        "importances": feature_importances(gate.forest, matrix.column_names),
        "distributions": gate.distributions,
    })
    report.tables["gate_labels"] = Table(
        ["listing_id", "oof_abs_error_usd", "easy", "threshold_usd"],
        [(g.listing_id, g.oof_abs_error, g.easy, g.threshold) for g in labels])

    source = matrix
    if config.easy_only:
        rows = np.flatnonzero([int(i) in easy_ids for i in matrix.listing_ids])
        if len(rows) == 0:
            raise StageError("balance", DegenerateDataError("no easy listings to train on"))
        source = matrix.take(rows)
    balanced, summary = _stage("balance", balance_dataset, source, config.balance_config())
    report.add_section("balance", {**summary.to_dict(), "easy_only": config.easy_only,
                                   "target_per_listing": config.target_per_listing})
    if config.fold_mode == "row":
        report.warn(LEAKAGE_WARNING)

    trials = _stage("search", randomized_search, balanced.values, balanced.target,
                    config.space(), config.n_iter, config.folds, seed, balanced.listing_ids,
                    config.fold_mode)
    ranked = [t for t in trials if t.rank is not None]
    if not ranked:
        raise StageError("search", DegenerateDataError("every search trial failed"))
    best = ranked[0].params
    report.add_section("search", {
        "n_iter": config.n_iter, "folds": config.folds, "fold_mode": config.fold_mode,
        "scoring": "r2 on log1p(price)",
        "trials": [t.to_dict() for t in trials],
        "top3": format_top_k(trials, 3),
    })

    price_model = _stage("final", fit_forest, balanced.values, balanced.target, best, seed)
    final = {
        "params": best.to_dict(),
        "importances": feature_importances(price_model, matrix.column_names),
        "group_folds": _stage("final", _eval_section, balanced, best, config, "group",
                              easy_ids, report),
        "row_folds_leakage_prone": _stage("final", _eval_section, balanced, best, config,
                                          "row", easy_ids, report),
    }
    report.add_section("final", final)

    model = PricePipelineModel(spec, base.model, gate.forest, price_model, best, {
        "seed": seed,
        "gate_threshold": config.gate_threshold,
        "dataset_fingerprint": fp,
        "feature_names": matrix.column_names,
        "easy_only": config.easy_only,
    })
    return model, report


# --- availability workflow ----------------------------------------------------------

@dataclass
class AvailabilityModel:
    window: int
    centroid_low: float
    centroid_high: float
    nb: NBModel
    majority: tuple
    window_centroids: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "availability",
            "window": self.window,
            "centroid_low": self.centroid_low,
            "centroid_high": self.centroid_high,
            "nb": self.nb.to_dict(),
            "majority": list(self.majority),
            "window_centroids": {str(k): v for k, v in self.window_centroids.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AvailabilityModel":
        if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") != "availability":
            raise DomainError("not an availability artifact of a supported version")
        return cls(d["window"], d["centroid_low"], d["centroid_high"], NBModel.from_dict(d["nb"]),
                   tuple(d["majority"]), {int(k): v for k, v in d["window_centroids"].items()})


def cluster_windows(records: Sequence[ListingRecord], seed: int = 0) -> dict:
    """Low/high 2-means split of normalized availability for every window."""
    out = {}
    for w in WINDOWS:
        frac = normalize_availability([r.availability(w) for r in records], w)
        km = kmeans_1d(frac, 2, seed)
        out[w] = (frac, km)
    return out


def hypothesis2_run(records: Sequence[ListingRecord], window: int = 365,
                    config: RunConfig = RunConfig(),
                    report: RunReport | None = None) -> tuple[AvailabilityModel, RunReport]:
    """Cluster availability per window, then predict low/high from (zipcode, room_type)."""
    report = report or RunReport()
    report.meta.update({"version": __version__, "seed": config.seed})
    if len(records) < 2:
        raise StageError("cluster", DegenerateDataError("need at least two listings"))
    clusters = _stage("cluster", cluster_windows, records, config.seed)
    per_window = {}
    for w, (frac, km) in clusters.items():
        if km.degenerate or not km.centroids[0] < km.centroids[1]:
            raise StageError("cluster", DegenerateDataError(
                f"availability_{w} does not separate into two clusters"))
        per_window[w] = {
            "centroid_low": float(km.centroids[0]),
            "centroid_high": float(km.centroids[1]),
            "midpoint": float(km.centroids.mean()),
            "n_low": int((km.assignments == 0).sum()),
            "n_high": int((km.assignments == 1).sum()),
            "inertia": km.inertia,
            "iterations": km.iterations,
        }
        edges, _ = histogram(frac, np.linspace(0, 1, 21))
        rows = []
        for c in (0, 1):
            counts = np.histogram(frac[km.assignments == c], edges)[0]
            rows += [(("low", "high")[c], edges[i], edges[i + 1], int(n))
                     for i, n in enumerate(counts)]
        report.tables[f"availability_{w}_clusters"] = Table(
            ["cluster", "bin_left", "bin_right", "count"], rows)

    frac, km = clusters[window]
    labels = split_low_high(km)
    rows = [(r.zipcode, r.room_type) for r in records]
    idx = np.random.default_rng(np.random.SeedSequence([config.seed, 11])).permutation(len(rows))
    n_test = int(math.ceil(config.nb_holdout_fraction * len(rows))) \
        if config.nb_holdout_fraction > 0 else 0
    n_test = min(n_test, len(rows) - 1)
    test, train = np.sort(idx[:n_test]), np.sort(idx[n_test:])
    if n_test == 0:
        test = train
    tr_rows, tr_labels = [rows[i] for i in train], [labels[i] for i in train]
    te_rows, te_labels = [rows[i] for i in test], [labels[i] for i in test]
    nb = _stage("naive_bayes", fit_multinomial_nb, tr_rows, tr_labels, config.nb_alpha)
    maj_label = min(set(tr_labels), key=lambda l: (-tr_labels.count(l), l))
    maj_acc = float(np.mean([l == maj_label for l in te_labels]))
    seen = set(nb.classes)
    eval_rows = [r for r, l in zip(te_rows, te_labels) if l in seen]
    eval_labels = [l for l in te_labels if l in seen]
    nb_acc = nb_accuracy(nb, eval_rows, eval_labels) if eval_rows else float("nan")

    model = AvailabilityModel(window, float(km.centroids[0]), float(km.centroids[1]), nb,
                              (maj_label, maj_acc),
                              {w: [v["centroid_low"], v["centroid_high"]]
                               for w, v in per_window.items()})
    report.add_section("availability", {
        "window": window,
        "windows": {str(w): v for w, v in per_window.items()},
        "n_train": len(train), "n_test": len(test),
        "nb_accuracy": nb_acc,
        "nb_train_accuracy": nb_accuracy(nb, tr_rows, tr_labels),
        "majority_label": maj_label,
        "majority_accuracy": maj_acc,
        "alpha": config.nb_alpha,
        "features": ["zipcode", "room_type"],
    })
    return model, report


def availability_likelihood(model: AvailabilityModel, zipcode: str, room_type: str) -> float:
    """Posterior probability that the listing falls in the high-availability group."""
    proba = predict_proba_nb(model.nb, [(zipcode, room_type)])[0]
    if "high" not in model.nb.classes:
        return 0.0
    return float(proba[model.nb.classes.index("high")])


def likelihood_table(model: AvailabilityModel, records: Sequence[ListingRecord]) -> Table:
    pairs = sorted({(r.zipcode, r.room_type) for r in records})
    return Table(["zipcode", "room_type", "p_high"],
                 [(z, t, availability_likelihood(model, z, t)) for z, t in pairs])


# --- artifacts ----------------------------------------------------------------------

def save_model(model, path) -> None:
    from airprice.report import dumps

    Path(path).write_text(dumps(model.to_dict()), encoding="utf-8")


def load_model(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = d.get("kind")
    if kind == "price_pipeline":
        return PricePipelineModel.from_dict(d)
    if kind == "availability":
        return AvailabilityModel.from_dict(d)
    raise DomainError(f"unknown artifact kind {kind!r}")
