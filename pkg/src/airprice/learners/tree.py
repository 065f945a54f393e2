"""CART trees (regression and classification) on top of the compiled kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from airprice.errors import DomainError
from airprice.learners import _kernels

TASKS = ("regression", "classification")


@dataclass(frozen=True)
class HyperParams:
    n_estimators: int = 100
    max_features: str = "auto"
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_estimators < 1:
            raise DomainError("n_estimators must be >= 1")
        if self.max_features not in ("auto", "sqrt"):
            raise DomainError(f"max_features must be 'auto' or 'sqrt', got {self.max_features!r}")
        if self.max_depth is not None and self.max_depth < 0:
            raise DomainError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise DomainError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise DomainError("min_samples_leaf must be >= 1")

    def to_dict(self) -> dict:
        # key order follows the search report layout
        return {
            "n_estimators": self.n_estimators,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "max_depth": self.max_depth,
            "bootstrap": self.bootstrap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(**d)


def resolve_max_features(max_features: str, n_features: int, task: str) -> int:
    """'auto' is every feature for regression and ceil(sqrt(p)) for classification."""
    if max_features == "auto" and task == "regression":
        return n_features
    return max(1, math.ceil(math.sqrt(n_features)))


class Split(NamedTuple):
    feature: int
    threshold: float
    gain: float


@dataclass
class TreeNode:
    """Nested view of one node; ``Tree`` stores the same data as flat arrays."""

    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None
    class_counts: list[float] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class Tree:
    task: str
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, 1) means or (n_nodes, n_classes) counts
    n_samples: np.ndarray
    impurity: np.ndarray
    decrease: np.ndarray  # n_node * gain at internal nodes

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.left == -1).sum())

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        """Leaf means (regression) or leaf class frequencies (classification)."""
        leaves = self.apply(X)
        if self.task == "regression":
            return self.value[leaves, 0]
        counts = self.value[leaves]
        return counts / counts.sum(axis=1, keepdims=True)

    def feature_decrease(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        internal = self.left != -1
        np.add.at(out, self.feature[internal], self.decrease[internal])
        return out

    def root(self) -> TreeNode:
        def build(i: int) -> TreeNode:
            if self.left[i] == -1:
                if self.task == "regression":
                    return TreeNode(value=float(self.value[i, 0]))
                return TreeNode(class_counts=[float(c) for c in self.value[i]])
            return TreeNode(int(self.feature[i]), float(self.threshold[i]),
                            build(int(self.left[i])), build(int(self.right[i])))
        return build(0)

    def to_dict(self) -> dict:
        d = {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "n_samples": self.n_samples.tolist(),
            "impurity": self.impurity.tolist(),
            "decrease": self.decrease.tolist(),
        }
        if self.task == "regression":
            d["value"] = self.value[:, 0].tolist()
        else:
            d["class_counts"] = self.value.tolist()
        return d

    @classmethod
    def from_dict(cls, task: str, d: dict) -> "Tree":
        if task == "regression":
            value = np.asarray(d["value"], dtype=np.float64)[:, None]
        else:
            value = np.asarray(d["class_counts"], dtype=np.float64)
        return cls(task,
                   np.asarray(d["feature"], dtype=np.int64),
                   np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64),
                   np.asarray(d["right"], dtype=np.int64),
                   value,
                   np.asarray(d["n_samples"], dtype=np.int64),
                   np.asarray(d["impurity"], dtype=np.float64),
                   np.asarray(d["decrease"], dtype=np.float64))


def _targets(y, task: str, n_classes: int | None):
    if task == "regression":
        yv = np.ascontiguousarray(y, dtype=np.float64)
        return yv, np.zeros(len(yv), np.int64), 0
    yc = np.ascontiguousarray(y, dtype=np.int64)
    if len(yc) and yc.min() < 0:
        raise DomainError("class labels must be encoded as indices >= 0")
    k = int(n_classes if n_classes is not None else (yc.max() + 1 if len(yc) else 1))
    return np.zeros(len(yc)), yc, k


def best_split(X, y, feature_subset=None, task: str = "regression",
               min_samples_leaf: int = 1) -> Split | None:
    """Highest-gain axis-aligned split, or None when nothing has positive gain.

    Regression gain is the drop in population variance, classification gain
    the drop in Gini impurity, both weighted by child size. Thresholds sit at
    midpoints of consecutive distinct values; ties prefer the lower feature
    index, then the lower threshold. Classification ``y`` holds class indices.
    """
    if task not in TASKS:
        raise DomainError(f"unknown task {task!r}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DomainError("best_split needs a 2-D X with at least two rows")
    if feature_subset is None:
        feature_subset = range(X.shape[1])
    features = np.array(sorted(feature_subset), dtype=np.int64)
    yv, yc, k = _targets(y, task, None)
    found, feat, thr, gain = _kernels.best_split_kernel(X, yv, yc, k, presort(X), features,
                                                        int(min_samples_leaf))
    if not found:
        return None
    return Split(int(feat), float(thr), float(gain))


def presort(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)


def fit_tree(X, y, params: HyperParams = HyperParams(), task: str = "regression",
             seed: int = 0, sample_counts=None, n_classes: int | None = None,
             sorted_rows=None) -> Tree:
    """Grow one tree.

    ``seed`` drives the per-node feature sampling stream; ``sample_counts``
    gives integer row multiplicities (a bootstrap draw), defaulting to ones.
    """
    if task not in TASKS:
        raise DomainError(f"unknown task {task!r}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DomainError("fit_tree needs a 2-D X with at least one row")
    yv, yc, k = _targets(y, task, n_classes)
    if sample_counts is None:
        sample_counts = np.ones(X.shape[0], np.int64)
    sample_counts = np.ascontiguousarray(sample_counts, dtype=np.int64)
    if sorted_rows is None:
        sorted_rows = presort(X)
    m = resolve_max_features(params.max_features, X.shape[1], task)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    arrays = _kernels.grow_tree(X, yv, yc, k, sorted_rows, sample_counts, max_depth,
                                int(params.min_samples_split), int(params.min_samples_leaf),
                                int(m), int(seed))
    return Tree(task, *arrays)
