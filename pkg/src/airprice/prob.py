"""Availability learners: 1-D k-means and categorical multinomial Naive Bayes."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.special import logsumexp

from airprice.errors import DegenerateDataError, DomainError

WINDOWS = (30, 60, 90, 365)
SCHEMA_VERSION = 1
# log-joint scores closer than this count as tied
TIE_TOL = 1e-12


def normalize_availability(days, window: int):
    """Fraction of the window the listing is bookable."""
    if window not in WINDOWS:
        raise DomainError(f"window must be one of {WINDOWS}, got {window}")
    d = np.asarray(days, dtype=np.float64)
    if np.any(d < 0) or np.any(d > window):
        raise DomainError(f"availability days must lie in [0, {window}]")
    out = d / window
    return float(out) if out.ndim == 0 else out


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int
    degenerate: bool = False
    inertia_history: list[float] = field(default_factory=list)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(x[rng.integers(len(x))])
        else:
            centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centers, dtype=np.float64)


def _assign(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # argmin picks the lowest index on ties
    return np.abs(x[:, None] - c[None, :]).argmin(axis=1)


def kmeans_1d(values, k: int = 2, seed: int = 0, max_iter: int = 300,
              tol: float = 1e-6) -> KMeansResult:
    """Lloyd's algorithm on a line from a seeded k-means++ start.

    An emptied cluster is reseeded at the point currently farthest from its
    centroid. Centroids come back sorted ascending, so cluster 0 is the
    lowest. ``degenerate`` is set when there are fewer distinct values than k.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if k < 1:
        raise DomainError("k must be >= 1")
    if len(x) < k:
        raise DomainError(f"need at least k={k} values, got {len(x)}")
    if not np.isfinite(x).all():
        raise DegenerateDataError("non-finite values passed to kmeans_1d")
    degenerate = len(np.unique(x)) < k
    rng = np.random.default_rng(seed)
    c = _kmeanspp(x, k, rng)
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        a = _assign(x, c)
        sq = (x - c[a]) ** 2
        history.append(float(sq.sum()))
        new = c.copy()
        for j in range(k):
            members = x[a == j]
            if len(members):
                new[j] = members.mean()
            else:
                far = int(np.argmax(sq))
                new[j] = x[far]
                sq[far] = 0.0
        shift = float(np.max(np.abs(new - c)))
        c = new
        if shift < tol:
            break
    order = np.argsort(c, kind="stable")
    c = c[order]
    a = _assign(x, c)
    inertia = float(((x - c[a]) ** 2).sum())
    return KMeansResult(c, a, inertia, iterations, degenerate, history)


def split_low_high(result: KMeansResult) -> list[str]:
    if len(result.centroids) != 2:
        raise DomainError("split_low_high needs a two-cluster result")
    return ["low" if a == 0 else "high" for a in result.assignments]


@dataclass
class NBModel:
    classes: list
    class_counts: np.ndarray
    class_log_prior: np.ndarray
    vocabularies: list[tuple]
    # one (n_classes, len(vocab) + 1) table per feature; last column is the "other" slot
    feature_log_prob: list[np.ndarray]
    alpha: float = 1.0

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "multinomial_nb",
            "alpha": self.alpha,
            "classes": list(self.classes),
            "class_counts": self.class_counts.tolist(),
            "class_log_prior": self.class_log_prior.tolist(),
            "vocabularies": [list(v) for v in self.vocabularies],
            "feature_log_prob": [t.tolist() for t in self.feature_log_prob],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NBModel":
        return cls(list(d["classes"]), np.asarray(d["class_counts"], dtype=np.float64),
                   np.asarray(d["class_log_prior"], dtype=np.float64),
                   [tuple(v) for v in d["vocabularies"]],
                   [np.asarray(t, dtype=np.float64) for t in d["feature_log_prob"]],
                   float(d["alpha"]))


def fit_multinomial_nb(rows: Sequence[Sequence[Hashable]], labels: Sequence[Hashable],
                       alpha: float = 1.0) -> NBModel:
    """Class priors from frequencies; per-feature likelihoods with additive smoothing.

    P(category | class) = (count + alpha) / (class_count + alpha * (|vocab| + 1)),
    where the extra slot absorbs categories never seen in training.
    """
    if alpha <= 0:
        raise DomainError("alpha must be > 0")
    if len(rows) != len(labels) or not rows:
        raise DomainError("rows and labels must be nonempty and of equal length")
    n_features = len(rows[0])
    if any(len(r) != n_features for r in rows):
        raise DomainError("all rows need the same number of features")
    classes = sorted(set(labels))
    cidx = {c: i for i, c in enumerate(classes)}
    y = np.array([cidx[l] for l in labels])
    class_counts = np.bincount(y, minlength=len(classes)).astype(np.float64)
    log_prior = np.log(class_counts) - np.log(class_counts.sum())
    vocabs, tables = [], []
    for j in range(n_features):
        vocab = tuple(sorted({r[j] for r in rows}))
        vidx = {v: i for i, v in enumerate(vocab)}
        counts = np.zeros((len(classes), len(vocab) + 1))
        np.add.at(counts, (y, [vidx[r[j]] for r in rows]), 1.0)
        probs = (counts + alpha) / (class_counts[:, None] + alpha * (len(vocab) + 1))
        vocabs.append(vocab)
        tables.append(np.log(probs))
    return NBModel(classes, class_counts, log_prior, vocabs, tables, float(alpha))


def _joint_log_likelihood(model: NBModel, rows) -> np.ndarray:
    jll = np.tile(model.class_log_prior, (len(rows), 1))
    for j, (vocab, table) in enumerate(zip(model.vocabularies, model.feature_log_prob)):
        vidx = {v: i for i, v in enumerate(vocab)}
        slots = np.array([vidx.get(r[j], len(vocab)) for r in rows], dtype=np.int64)
        jll += table[:, slots].T
    return jll


def predict_proba_nb(model: NBModel, rows) -> np.ndarray:
    if len(rows) == 0:
        return np.zeros((0, len(model.classes)))
    jll = _joint_log_likelihood(model, rows)
    return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))


def predict_nb(model: NBModel, rows, return_proba: bool = False):
    """Argmax of the log posterior.

    Ties go to the class with the larger prior, then to the lower label index.
    """
    if len(rows) == 0:
        return ([], np.zeros((0, len(model.classes)))) if return_proba else []
    jll = _joint_log_likelihood(model, rows)
    # rank classes: larger prior first, then lower index
    pref = sorted(range(len(model.classes)), key=lambda c: (-model.class_counts[c], c))
    out = []
    for row in jll:
        top = row.max()
        tol = TIE_TOL * max(1.0, abs(top))
        out.append(model.classes[next(c for c in pref if row[c] >= top - tol)])
    if return_proba:
        return out, np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
    return out


def nb_accuracy(model: NBModel, rows, labels) -> float:
    unknown = set(labels) - set(model.classes)
    if unknown:
        raise DomainError(f"labels not seen during training: {sorted(map(str, unknown))}")
    pred = predict_nb(model, rows)
    return float(np.mean([p == l for p, l in zip(pred, labels)])) if len(labels) else float("nan")


def majority_baseline(labels) -> tuple:
    """Most frequent label (ties to the lowest label) and its empirical frequency."""
    if len(labels) == 0:
        raise DomainError("majority_baseline needs at least one label")
    counts = Counter(labels)
    label = min(counts, key=lambda l: (-counts[l], l))
    return label, counts[label] / len(labels)
