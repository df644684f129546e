"""Numerically safe primitives over probability vectors and row-stochastic matrices."""
from __future__ import annotations

import numpy as np

SIMPLEX_TOL = 1e-9
LOG_FLOOR = 1e-300


def as_probvec(v, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate ``v`` as a point on the probability simplex and return it as float64."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError(f"probability vector must be 1-D with K >= 2 entries, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("probability vector contains NaN or Inf")
    if np.any(v < 0):
        raise ValueError("probability vector contains negative entries")
    if abs(v.sum() - 1.0) > tol:
        raise ValueError(f"probability vector sums to {v.sum():.12g}, not 1")
    return v


def normalize(v, epsilon: float = 1e-12) -> np.ndarray:
    """Scale a non-negative vector to unit mass.

    Vectors whose mass falls below ``epsilon`` map to the uniform vector
    instead of raising, so a streaming filter never halts on a degenerate step.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError(f"expected a 1-D vector with K >= 2 entries, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    if np.any(v < 0):
        raise ValueError("vector contains negative entries")
    s = v.sum()
    if s < epsilon:
        return np.full(v.shape[0], 1.0 / v.shape[0])
    return v / s


def is_degenerate(v, epsilon: float = 1e-12) -> bool:
    """True when :func:`normalize` would fall back to uniform."""
    return float(np.sum(v)) < epsilon


def shannon_entropy(q) -> float:
    """Entropy in nats with the ``0 ln 0 = 0`` convention."""
    q = as_probvec(q)
    nz = q[q > LOG_FLOOR]
    return float(-np.sum(nz * np.log(nz)))


def outer_product(a, b) -> np.ndarray:
    a = as_probvec(a)
    b = as_probvec(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return np.outer(a, b)


def row_normalize(C) -> np.ndarray:
    """Divide each row of a pseudo-count matrix by its sum."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {C.shape}")
    sums = C.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValueError("every row of a count matrix must have positive mass")
    return C / sums


def project_posterior(A, p) -> np.ndarray:
    """Push a posterior one step through the dynamics: ``pi[j] = sum_i A[i, j] p[i]``."""
    A = np.asarray(A, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if A.shape != (p.shape[0], p.shape[0]):
        raise ValueError(f"dimension mismatch: A is {A.shape}, p has {p.shape[0]} entries")
    return normalize(A.T @ p)


def uniform(K: int) -> np.ndarray:
    if K < 2:
        raise ValueError("K must be >= 2")
    return np.full(K, 1.0 / K)


def is_row_stochastic(A, tol: float = SIMPLEX_TOL) -> bool:
    A = np.asarray(A, dtype=np.float64)
    return bool(np.all(A >= 0) and np.allclose(A.sum(axis=1), 1.0, rtol=0.0, atol=tol))
