"""Cross-validation, R^2 scoring and randomized hyperparameter search."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from airprice.errors import DegenerateDataError, DomainError
from airprice.learners import HyperParams, fit_forest, predict_forest

log = logging.getLogger(__name__)

FOLD_MODES = ("row", "group")


@dataclass(frozen=True)
class SearchSpace:
    n_estimators: tuple[int, int] = (100, 200)
    max_features: tuple[str, ...] = ("auto", "sqrt")
    max_depth: tuple[int | None, ...] = tuple(range(10, 21)) + (None,)
    min_samples_split: tuple[int, ...] = (2, 5, 10)
    min_samples_leaf: tuple[int, ...] = (1, 2, 4)
    bootstrap: tuple[bool, ...] = (True, False)

    def __post_init__(self):
        lo, hi = self.n_estimators
        if lo < 1 or hi < lo:
            raise DomainError(f"bad n_estimators range {self.n_estimators}")
        for name in ("max_features", "max_depth", "min_samples_split", "min_samples_leaf",
                     "bootstrap"):
            if not getattr(self, name):
                raise DomainError(f"search dimension {name} is empty")

    def contains(self, params: HyperParams) -> bool:
        lo, hi = self.n_estimators
        return (lo <= params.n_estimators <= hi
                and params.max_features in self.max_features
                and params.max_depth in self.max_depth
                and params.min_samples_split in self.min_samples_split
                and params.min_samples_leaf in self.min_samples_leaf
                and params.bootstrap in self.bootstrap)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        kw = {}
        for key, value in d.items():
            if key not in cls.__dataclass_fields__:
                raise DomainError(f"unknown search space key {key!r}")
            kw[key] = tuple(value)
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in self.__dataclass_fields__}


@dataclass
class TrialResult:
    trial_index: int
    params: HyperParams
    fold_scores: list[float] = field(default_factory=list)
    mean_score: float = float("nan")
    std_score: float = float("nan")
    rank: int | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "trial_index": self.trial_index,
            "mean_score": self.mean_score,
            "std_score": self.std_score,
            "fold_scores": list(self.fold_scores),
            "params": self.params.to_dict(),
            "error": self.error,
        }


def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Seeded permutation of range(n) cut into k folds whose sizes differ by at most one."""
    if k < 2:
        raise DomainError("k must be >= 2")
    if k > n:
        raise DomainError(f"cannot make {k} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def group_kfold_split(groups, k: int, seed: int = 0) -> list[np.ndarray]:
    """Folds that keep every row of a group together."""
    groups = np.asarray(groups)
    uniq, inverse = np.unique(groups, return_inverse=True)
    if k < 2:
        raise DomainError("k must be >= 2")
    if k > len(uniq):
        raise DomainError(f"cannot make {k} group folds from {len(uniq)} groups")
    perm = np.random.default_rng(seed).permutation(len(uniq))
    fold_of_group = np.empty(len(uniq), np.int64)
    for f, part in enumerate(np.array_split(perm, k)):
        fold_of_group[part] = f
    fold_of_row = fold_of_group[inverse]
    return [np.flatnonzero(fold_of_row == f) for f in range(k)]


def make_folds(n: int, k: int, seed: int, fold_mode: str = "row", groups=None) -> list[np.ndarray]:
    if fold_mode == "row":
        return kfold_split(n, k, seed)
    if fold_mode == "group":
        if groups is None:
            raise DomainError("group folds need group labels")
        return group_kfold_split(groups, k, seed)
    raise DomainError(f"fold_mode must be one of {FOLD_MODES}")


def train_index(folds: Sequence[np.ndarray], i: int) -> np.ndarray:
    return np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))


def r2_score(y_true, y_pred) -> float:
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if y.shape != p.shape or len(y) < 2:
        raise DomainError("r2_score needs two equal-length vectors of length >= 2")
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise DegenerateDataError("r2 undefined for a constant y_true")
    return 1.0 - float(((y - p) ** 2).sum()) / ss_tot


def sample_params(space: SearchSpace, rng: np.random.Generator) -> HyperParams:
    """One uniform draw per dimension, in a fixed order."""
    lo, hi = space.n_estimators

    def pick(options):
        return options[int(rng.integers(len(options)))]

    return HyperParams(
        n_estimators=int(rng.integers(lo, hi + 1)),
        max_features=pick(space.max_features),
        max_depth=pick(space.max_depth),
        min_samples_split=pick(space.min_samples_split),
        min_samples_leaf=pick(space.min_samples_leaf),
        bootstrap=bool(pick(space.bootstrap)),
    )


def fit_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, np.uint32)[0])


def cross_val_predict(X, y, params: HyperParams, folds: Sequence[np.ndarray], seed: int,
                      salt: int = 0) -> tuple[list[float], np.ndarray]:
    """Per-fold R^2 and out-of-fold predictions of a regression forest."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    oof = np.empty(len(y))
    scores = []
    for i, test in enumerate(folds):
        train = train_index(folds, i)
        forest = fit_forest(X[train], y[train], params, fit_seed(seed, salt, i))
        pred = predict_forest(forest, X[test])
        oof[test] = pred
        scores.append(r2_score(y[test], pred))
    return scores, oof


def randomized_search(X, y, space: SearchSpace = SearchSpace(), n_iter: int = 100, k: int = 10,
                      seed: int = 0, groups=None, fold_mode: str = "row") -> list[TrialResult]:
    """Sample ``n_iter`` settings, score each by k-fold mean R^2, rank best first.

    All trials share one fold assignment. Ranking is by mean score
    descending, then std ascending, then trial index. Trials that raise are
    kept with ``error`` set and no rank, after the ranked ones.
    """
    if n_iter < 1:
        raise DomainError("n_iter must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    folds = make_folds(len(y), k, seed, fold_mode, groups)
    trials = []
    for t in range(n_iter):
        params = sample_params(space, rng)
        trial = TrialResult(t, params)
        try:
            scores, _ = cross_val_predict(X, y, params, folds, seed, salt=t + 1)
            trial.fold_scores = scores
            trial.mean_score = float(np.mean(scores))
            trial.std_score = float(np.std(scores))
        except (ValueError, ArithmeticError) as exc:
            trial.error = f"{type(exc).__name__}: {exc}"
            log.warning("trial %d failed: %s", t, trial.error)
        log.debug("trial %d %s -> %.4f", t, params, trial.mean_score)
        trials.append(trial)
    ok = sorted((tr for tr in trials if tr.error is None),
                key=lambda tr: (-tr.mean_score, tr.std_score, tr.trial_index))
    for rank, tr in enumerate(ok, start=1):
        tr.rank = rank
    return ok + [tr for tr in trials if tr.error is not None]


def trees_curve(X, y, params: HyperParams, n_list: Sequence[int], k: int = 10, seed: int = 0,
                groups=None, fold_mode: str = "row",
                inverse: Callable[[np.ndarray], np.ndarray] | None = None) -> list[tuple[int, float, float]]:
    """(n_trees, mean train RMSE, mean held-out RMSE) averaged over k folds.

    One forest of max(n_list) trees is grown per fold; because tree i depends
    only on (seed, i), its first n trees are exactly the n-tree forest.
    ``inverse`` maps targets and predictions back (e.g. to USD) before RMSE.
    """
    from airprice.report import rmse

    n_list = sorted(set(int(n) for n in n_list))
    if not n_list or n_list[0] < 1:
        raise DomainError("n_list needs positive tree counts")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inv = inverse or (lambda a: a)
    folds = make_folds(len(y), k, seed, fold_mode, groups)
    train_err = np.zeros((len(folds), len(n_list)))
    test_err = np.zeros((len(folds), len(n_list)))
    big = HyperParams(max(n_list), params.max_features, params.max_depth,
                      params.min_samples_split, params.min_samples_leaf, params.bootstrap)
    for i, test in enumerate(folds):
        train = train_index(folds, i)
        forest = fit_forest(X[train], y[train], big, fit_seed(seed, 0, i))
        tr_pred = np.stack([t.predict(X[train]) for t in forest.trees])
        te_pred = np.stack([t.predict(X[test]) for t in forest.trees])
        for j, n in enumerate(n_list):
            train_err[i, j] = rmse(inv(y[train]), inv(np.mean(tr_pred[:n], axis=0)))
            test_err[i, j] = rmse(inv(y[test]), inv(np.mean(te_pred[:n], axis=0)))
    return [(n, float(train_err[:, j].mean()), float(test_err[:, j].mean()))
            for j, n in enumerate(n_list)]


def format_top_k(trials: Sequence[TrialResult], k: int = 3) -> str:
    """Plain-text block: rank, mean/std validation score, parameter dict."""
    blocks = []
    for tr in [t for t in trials if t.rank is not None][:k]:
        blocks.append(
            f"Model with rank: {tr.rank}\n"
            f"Mean validation score: {tr.mean_score:.3f} (std: {tr.std_score:.3f})\n"
            f"Parameters: {tr.params.to_dict()}\n"
        )
    return "\n".join(blocks)


def write_search_results(trials: Sequence[TrialResult], json_path, csv_path) -> None:
    Path(json_path).write_text(json.dumps([t.to_dict() for t in trials], indent=2) + "\n")
    with Path(csv_path).open("w", newline="") as fh:
        w = csv.writer(fh)
        keys = list(HyperParams().to_dict())
        w.writerow(["rank", "trial_index", "mean_score", "std_score"] + keys + ["error"])
        for t in trials:
            p = t.params.to_dict()
            w.writerow([t.rank if t.rank is not None else "", t.trial_index, repr(t.mean_score),
                        repr(t.std_score)] + ["" if p[kk] is None else p[kk] for kk in keys]
                       + [t.error or ""])
