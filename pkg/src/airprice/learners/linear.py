"""Ordinary least squares with an intercept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from airprice.errors import DomainError, SingularMatrixError

SCHEMA_VERSION = 1
# |R_jj| below this (on unit-norm columns) marks a dependent column
RANK_TOL = 1e-10


@dataclass(frozen=True)
class LinearModel:
    coefficients: np.ndarray
    intercept: float

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "linear",
                "coefficients": self.coefficients.tolist(), "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["coefficients"], dtype=np.float64), float(d["intercept"]))


def fit_ols(X, y, column_names=None) -> LinearModel:
    """Least-squares fit via Householder QR of the intercept-augmented design.

    Columns are scaled to unit norm first so the rank test is scale free.
    A column that is (numerically) a combination of the ones before it raises
    ``SingularMatrixError`` naming it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if len(y) != n:
        raise DomainError("X and y lengths differ")
    if n <= p:
        raise DomainError(f"need more rows than columns ({n} <= {p})")
    names = ["intercept"] + (list(column_names) if column_names is not None else list(range(p)))
    A = np.hstack([np.ones((n, 1)), X])
    norms = np.linalg.norm(A, axis=0)
    for j in np.flatnonzero(norms == 0):
        raise SingularMatrixError(f"column {names[j]!r} is all zeros", names[j])
    q, r = np.linalg.qr(A / norms)
    diag = np.abs(np.diag(r))
    bad = np.flatnonzero(diag < RANK_TOL)
    if len(bad):
        j = int(bad[0])
        raise SingularMatrixError(f"design is rank deficient at column {names[j]!r}", names[j])
    beta = solve_triangular(r, q.T @ y) / norms
    return LinearModel(beta[1:].copy(), float(beta[0]))


def predict_linear(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != len(model.coefficients):
        raise DomainError(f"expected {len(model.coefficients)} columns, got {X.shape[1]}")
    return X @ model.coefficients + model.intercept


def independent_columns(X, tol: float = RANK_TOL) -> list[int]:
    """Greedy left-to-right subset of columns that, with an intercept, has full rank."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    basis = np.ones((n, 1)) / np.sqrt(n)
    keep = []
    for j in range(X.shape[1]):
        col = X[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        v = col / norm
        v = v - basis @ (basis.T @ v)
        v = v - basis @ (basis.T @ v)
        rn = np.linalg.norm(v)
        if rn > 1e-8:
            keep.append(j)
            basis = np.hstack([basis, (v / rn)[:, None]])
    return keep
