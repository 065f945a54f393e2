"""Bagged CART ensembles."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from airprice.errors import DomainError
from airprice.learners.tree import TASKS, HyperParams, Tree, fit_tree, presort

SCHEMA_VERSION = 1


@dataclass
class Forest:
    task: str
    trees: list[Tree]
    params: HyperParams
    feature_importances: np.ndarray
    seed: int
    n_features: int
    classes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "forest",
            "task": self.task,
            "seed": self.seed,
            "n_features": self.n_features,
            "params": self.params.to_dict(),
            "classes": list(self.classes),
            "feature_importances": self.feature_importances.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DomainError(f"unsupported forest schema_version {d.get('schema_version')!r}")
        task = d["task"]
        return cls(task, [Tree.from_dict(task, t) for t in d["trees"]],
                   HyperParams.from_dict(d["params"]),
                   np.asarray(d["feature_importances"], dtype=np.float64),
                   d["seed"], d["n_features"], list(d["classes"]))


def tree_seeds(seed: int, index: int) -> tuple[np.random.Generator, int]:
    """Independent stream for tree ``index``: a bootstrap generator and a kernel seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    return rng, int(rng.integers(0, 2**63 - 1))


def fit_forest(X, y, params: HyperParams = HyperParams(), seed: int = 0,
               task: str = "regression", n_jobs: int = 1) -> Forest:
    """Fit ``params.n_estimators`` trees.

    Tree i depends only on (seed, i), so any ``n_jobs`` gives the same forest.
    Classification labels may be any sortable values; they are stored in
    ``Forest.classes`` and trees see their indices.
    """
    if task not in TASKS:
        raise DomainError(f"unknown task {task!r}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DomainError("fit_forest needs a nonempty 2-D X")
    n = X.shape[0]
    if task == "classification":
        classes, yi = np.unique(np.asarray(y), return_inverse=True)
        classes = classes.tolist()
        target = yi.astype(np.int64)
        n_classes = len(classes)
    else:
        classes, target, n_classes = [], np.asarray(y, dtype=np.float64), None
    if len(target) != n:
        raise DomainError("X and y lengths differ")
    sorted_rows = presort(X)

    def one(i: int) -> Tree:
        rng, kseed = tree_seeds(seed, i)
        if params.bootstrap:
            counts = np.bincount(rng.integers(0, n, n), minlength=n)
        else:
            counts = np.ones(n, np.int64)
        return fit_tree(X, target, params, task, kseed, counts, n_classes, sorted_rows)

    idx = range(params.n_estimators)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(one, idx))
    else:
        trees = [one(i) for i in idx]

    total = np.zeros(X.shape[1])
    for t in trees:
        total += t.feature_decrease(X.shape[1]) / t.n_samples[0]
    s = total.sum()
    importances = total / s if s > 0 else np.zeros(X.shape[1])
    return Forest(task, trees, params, importances, seed, X.shape[1], classes)


def predict_proba(forest: Forest, X) -> np.ndarray:
    if forest.task != "classification":
        raise DomainError("predict_proba is for classification forests")
    return np.mean(np.stack([t.predict(X) for t in forest.trees]), axis=0)


def predict_forest(forest: Forest, X) -> np.ndarray:
    """Mean of tree outputs (regression) or soft-vote argmax (classification).

    Soft-vote ties go to the lowest class index.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise DomainError(f"expected {forest.n_features} feature columns")
    if forest.task == "regression":
        return np.mean(np.stack([t.predict(X) for t in forest.trees]), axis=0)
    proba = predict_proba(forest, X)
    return np.asarray(forest.classes)[np.argmax(proba, axis=1)]


def feature_importances(forest: Forest, names=None):
    """Importance vector, or (name, importance) pairs sorted descending when names are given."""
    if names is None:
        return forest.feature_importances.copy()
    pairs = list(zip(names, forest.feature_importances.tolist()))
    return sorted(pairs, key=lambda p: (-p[1], p[0]))
