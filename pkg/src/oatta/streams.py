"""Seeded generation of controlled label streams.

Supported kinds: ``random`` (i.i.d. uniform), ``sticky``, ``permuted``,
``regime_switch`` (stickiness changes at a switch point), ``three_phase``
(one permutation rule, a linear blend, then a second rule), and two
explicit-matrix kinds for hand-written dynamics.
"""
from __future__ import annotations

import bisect
import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .seeding import rng_for

KINDS = (
    "random", "sticky", "permuted", "regime_switch", "three_phase",
    "explicit_matrix", "explicit_schedule",
)
ALIASES = {"s1": "random", "s2": "sticky", "s3": "permuted", "s4": "regime_switch", "s5": "three_phase"}


def _check_alpha(alpha: float):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"stickiness must lie in [0, 1], got {alpha}")


def _check_perm(sigma, K: int) -> list[int]:
    sigma = [int(s) for s in sigma]
    if sorted(sigma) != list(range(K)):
        raise ValueError(f"not a permutation of range({K}): {sigma}")
    return sigma


def cyclic_shift(K: int, by: int = 1) -> list[int]:
    return [(i + by) % K for i in range(K)]


def sticky_matrix(K: int, alpha: float) -> np.ndarray:
    if K < 2:
        raise ValueError("K must be >= 2")
    _check_alpha(alpha)
    A = np.full((K, K), (1.0 - alpha) / (K - 1))
    np.fill_diagonal(A, alpha)
    return A


def permuted_matrix(K: int, alpha: float, sigma: Sequence[int]) -> np.ndarray:
    """Row ``i`` puts ``alpha`` on ``sigma[i]`` and spreads the rest evenly."""
    if K < 2:
        raise ValueError("K must be >= 2")
    _check_alpha(alpha)
    sigma = _check_perm(sigma, K)
    A = np.full((K, K), (1.0 - alpha) / (K - 1))
    A[np.arange(K), sigma] = alpha
    return A


def imbalanced_source_matrices() -> tuple[np.ndarray, np.ndarray]:
    """The two 10-class imbalance-preserving matrices (majority classes 0-4).

    The first is the stationary sticky matrix; the second drives the second
    half of the regime-switch variant.
    """
    def build(diag_major, diag_minor, to_major, to_minor):
        A = np.empty((10, 10))
        A[:, :5] = to_major
        A[:, 5:] = to_minor
        for i in range(10):
            A[i, i] = diag_major if i < 5 else diag_minor
        return A

    return build(0.755, 0.705, 0.055, 0.005), build(0.5909, 0.5091, 0.0909, 0.0091)


@dataclass(frozen=True)
class StreamSpec:
    kind: str
    num_classes: int = 10
    length: int = 10_000
    alpha: float = 0.7
    alpha2: float = 0.5
    permutation: tuple[int, ...] | None = None
    permutation2: tuple[int, ...] | None = None
    seed: int = 0
    initial_distribution: tuple[float, ...] | None = None
    matrix: tuple[tuple[float, ...], ...] | None = None
    matrix2: tuple[tuple[float, ...], ...] | None = None
    switch_at: float = 0.5
    phase_bounds: tuple[float, float] = (1 / 3, 2 / 3)

    def __post_init__(self):
        kind = ALIASES.get(str(self.kind).lower(), str(self.kind).lower())
        if kind not in KINDS:
            raise ValueError(f"kind: unknown stream kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        K = self.num_classes
        if int(K) != K or K < 2:
            raise ValueError(f"num_classes: must be an integer >= 2, got {K}")
        if int(self.length) != self.length or self.length < 1:
            raise ValueError(f"length: must be an integer >= 1, got {self.length}")
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 2**64:
            raise ValueError(f"seed: must be an unsigned 64-bit integer, got {self.seed}")
        for name in ("alpha", "alpha2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name}: must lie in [0, 1], got {getattr(self, name)}")
        for name in ("permutation", "permutation2"):
            v = getattr(self, name)
            if v is not None:
                try:
                    object.__setattr__(self, name, tuple(_check_perm(v, K)))
                except ValueError as e:
                    raise ValueError(f"{name}: {e}") from None
        for name in ("matrix", "matrix2"):
            v = getattr(self, name)
            if v is not None:
                M = np.asarray(v, dtype=np.float64)
                if M.shape != (K, K) or np.any(M < 0) or not np.allclose(M.sum(axis=1), 1.0, atol=1e-9):
                    raise ValueError(f"{name}: must be a row-stochastic {K}x{K} matrix")
                object.__setattr__(self, name, tuple(tuple(float(x) for x in row) for row in M))
        if self.initial_distribution is not None:
            d = np.asarray(self.initial_distribution, dtype=np.float64)
            if d.shape != (K,) or np.any(d < 0) or abs(d.sum() - 1) > 1e-9:
                raise ValueError("initial_distribution: must be a probability vector of length K")
            object.__setattr__(self, "initial_distribution", tuple(float(x) for x in d))
        if kind == "explicit_matrix" and self.matrix is None:
            raise ValueError("matrix: required for kind 'explicit_matrix'")
        if kind == "explicit_schedule" and (self.matrix is None or self.matrix2 is None):
            raise ValueError("matrix/matrix2: both required for kind 'explicit_schedule'")
        if not 0.0 <= self.switch_at <= 1.0:
            raise ValueError(f"switch_at: must lie in [0, 1], got {self.switch_at}")
        lo, hi = self.phase_bounds
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"phase_bounds: need 0 <= lo <= hi <= 1, got {self.phase_bounds}")
        object.__setattr__(self, "phase_bounds", (float(lo), float(hi)))

    def to_dict(self) -> dict:
        d = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            if isinstance(v, tuple):
                v = [list(r) if isinstance(r, tuple) else r for r in v]
            d[k] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StreamSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"{sorted(unknown)[0]}: unknown stream spec field")
        d = dict(d)
        for k in ("permutation", "permutation2", "initial_distribution", "phase_bounds"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        for k in ("matrix", "matrix2"):
            if d.get(k) is not None:
                d[k] = tuple(tuple(r) for r in d[k])
        return cls(**d)

    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @property
    def sigma(self) -> list[int]:
        return list(self.permutation) if self.permutation is not None else cyclic_shift(self.num_classes, 1)

    @property
    def sigma2(self) -> list[int]:
        return list(self.permutation2) if self.permutation2 is not None else cyclic_shift(self.num_classes, -1)

    def _switch_index(self) -> int:
        return int(round(self.switch_at * self.length))

    def _phase_indices(self) -> tuple[int, int]:
        lo, hi = self.phase_bounds
        return int(round(lo * self.length)), int(round(hi * self.length))

    def regime_at(self, t: int) -> int:
        """Identifier of the dynamics that generated label ``t`` from label ``t - 1``."""
        if self.kind in ("regime_switch", "explicit_schedule"):
            return 0 if t < self._switch_index() else 1
        if self.kind == "three_phase":
            b1, b2 = self._phase_indices()
            return 0 if t < b1 else (1 if t < b2 else 2)
        return 0

    def regime_matrix(self, regime: int) -> np.ndarray:
        """Fixed dynamics of a regime (the blended middle phase of ``three_phase`` has none)."""
        K = self.num_classes
        kind = self.kind
        if kind == "regime_switch":
            return sticky_matrix(K, self.alpha if regime == 0 else self.alpha2)
        if kind == "explicit_schedule":
            return np.array(self.matrix if regime == 0 else self.matrix2)
        if kind == "three_phase":
            if regime == 1:
                raise ValueError("the middle phase of a three-phase stream varies with t")
            return permuted_matrix(K, self.alpha, self.sigma if regime == 0 else self.sigma2)
        return self.transition_at(0)

    def transition_at(self, t: int) -> np.ndarray:
        """Transition matrix producing label ``t`` (0-based) from label ``t - 1``."""
        K = self.num_classes
        kind = self.kind
        if kind == "random":
            return np.full((K, K), 1.0 / K)
        if kind == "sticky":
            return sticky_matrix(K, self.alpha)
        if kind == "permuted":
            return permuted_matrix(K, self.alpha, self.sigma)
        if kind == "explicit_matrix":
            return np.array(self.matrix)
        if kind == "regime_switch":
            return sticky_matrix(K, self.alpha if t < self._switch_index() else self.alpha2)
        if kind == "explicit_schedule":
            return np.array(self.matrix if t < self._switch_index() else self.matrix2)
        # three_phase
        A1 = permuted_matrix(K, self.alpha, self.sigma)
        A2 = permuted_matrix(K, self.alpha, self.sigma2)
        b1, b2 = self._phase_indices()
        if t < b1:
            return A1
        if t >= b2:
            return A2
        beta = (t - b1) / (b2 - b1)
        return (1.0 - beta) * A1 + beta * A2


@dataclass
class LabeledStream:
    labels: np.ndarray
    regime: np.ndarray
    spec: StreamSpec | None = None

    def __len__(self):
        return len(self.labels)


def _cdf_rows(A: np.ndarray) -> list[list[float]]:
    cdf = np.cumsum(A, axis=1)
    cdf[:, -1] = np.inf  # absorb rounding so every u in [0, 1) lands in range
    return cdf.tolist()


def _draw(cdf_row: list[float], u: float) -> int:
    return bisect.bisect_right(cdf_row, u)


def sample_stream(spec: StreamSpec) -> LabeledStream:
    """Draw labels by inverse-CDF sampling from PCG64 uniforms (one uniform per label)."""
    K, T = spec.num_classes, spec.length
    rng = rng_for(spec.seed, "stream")
    u = rng.random(T).tolist()
    init = np.asarray(spec.initial_distribution) if spec.initial_distribution else np.full(K, 1.0 / K)
    init_cdf = _cdf_rows(init[None, :])[0]
    labels = [0] * T
    regime = [spec.regime_at(t) for t in range(T)]
    labels[0] = _draw(init_cdf, u[0])
    if spec.kind == "three_phase":
        fixed = {0: _cdf_rows(spec.regime_matrix(0)), 2: _cdf_rows(spec.regime_matrix(2))}
        for t in range(1, T):
            if regime[t] == 1:
                row = np.cumsum(spec.transition_at(t)[labels[t - 1]])
                row[-1] = np.inf
                labels[t] = _draw(row.tolist(), u[t])
            else:
                labels[t] = _draw(fixed[regime[t]][labels[t - 1]], u[t])
    else:
        tables = {0: _cdf_rows(spec.regime_matrix(0))}
        if spec.kind in ("regime_switch", "explicit_schedule"):
            tables[1] = _cdf_rows(spec.regime_matrix(1))
        for t in range(1, T):
            labels[t] = _draw(tables[regime[t]][labels[t - 1]], u[t])
    return LabeledStream(np.array(labels, dtype=np.int64), np.array(regime, dtype=np.int64), spec)


def transition_counts(labels, K: int) -> np.ndarray:
    """Brute-force tabulation of consecutive label pairs."""
    M = np.zeros((K, K), dtype=np.int64)
    for a, b in zip(labels[:-1], labels[1:]):
        M[a, b] += 1
    return M


def write_stream(stream: LabeledStream, fh, fmt: str = "csv") -> None:
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "label"])
        for t, y in enumerate(stream.labels.tolist()):
            w.writerow([t, y])
    elif fmt == "jsonl":
        for t, y in enumerate(stream.labels.tolist()):
            fh.write(json.dumps({"t": t, "label": y}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_labels(fh) -> np.ndarray:
    """Read a label stream written by :func:`write_stream` (format sniffed from the first line)."""
    text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return np.zeros(0, dtype=np.int64)
    if lines[0].lstrip().startswith("{"):
        return np.array([json.loads(ln)["label"] for ln in lines], dtype=np.int64)
    rows = list(csv.DictReader(io.StringIO(text)))
    return np.array([int(r["label"]) for r in rows], dtype=np.int64)
