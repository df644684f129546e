"""Paired significance testing and simple regression used by the evaluation harness."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXACT_MAX_N = 25


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of the positive differences
    pvalue: float
    n_effective: int
    method: str  # "exact", "normal" or "degenerate"
    all_zero: bool = False


def _average_ranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a))
    sa = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_counts(doubled_ranks: list[int]) -> list[int]:
    """Number of sign patterns reaching each value of the (doubled) positive-rank sum."""
    counts = [1]
    for r in doubled_ranks:
        new = counts + [0] * r
        for v, c in enumerate(counts):
            if c:
                new[v + r] += c
        counts = new
    return counts


def wilcoxon_signed_rank(diffs, zero_method: str = "wilcox") -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    ``zero_method="wilcox"`` drops zero differences before ranking;
    ``"pratt"`` ranks them and then discards their ranks. Ties get average
    ranks. Up to 25 non-zero differences the null distribution is counted
    exactly over all sign patterns; beyond that a tie-corrected normal
    approximation with continuity correction is used. If every difference
    is zero the p-value is 1 and ``all_zero`` is set.
    """
    d = np.asarray(diffs, dtype=np.float64)
    if d.ndim != 1 or d.size < 1:
        raise ValueError("need at least one difference")
    if not np.all(np.isfinite(d)):
        raise ValueError("differences must be finite")
    if zero_method == "wilcox":
        d = d[d != 0]
        ranks = _average_ranks(np.abs(d))
    elif zero_method == "pratt":
        ranks = _average_ranks(np.abs(d))
        keep = d != 0
        d, ranks = d[keep], ranks[keep]
    else:
        raise ValueError(f"unknown zero_method {zero_method!r}")
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate", all_zero=True)
    t_plus = float(ranks[d > 0].sum())

    if n <= EXACT_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        counts = _exact_counts(doubled)
        obs = int(round(2 * t_plus))
        le = sum(counts[: obs + 1])
        ge = sum(counts[obs:])
        p = min(1.0, 2 * min(le, ge) / 2**n)
        return WilcoxonResult(t_plus, p, n, "exact")

    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    if var <= 0:
        return WilcoxonResult(t_plus, 1.0, n, "normal")
    dev = t_plus - mean
    corrected = max(abs(dev) - 0.5, 0.0)
    z = corrected / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(t_plus, p, n, "normal")


def holm_adjust(p_values) -> np.ndarray:
    """Holm step-down adjusted p-values, returned in input order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("p-values must be a 1-D sequence")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    adjusted = np.empty(m)
    running = 0.0
    for i, idx in enumerate(order):
        running = max(running, min(1.0, (m - i) * p[idx]))
        adjusted[idx] = running
    return adjusted


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    pearson_r: float
    x_at_zero: float
    degenerate: bool = False


def linear_fit(x, y) -> LinearFit:
    """Ordinary least squares ``y ~ slope * x + intercept``.

    ``pearson_r`` is reported as 0 (with ``degenerate=True``) when ``y`` has
    no variance; ``x_at_zero`` is NaN when the slope is 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D sequences of equal length")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    syy = float(np.sum((y - ym) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    if sxx == 0:
        raise ValueError("x is constant")
    slope = sxy / sxx
    intercept = ym - slope * xm
    degenerate = syy == 0
    r = 0.0 if degenerate else sxy / math.sqrt(sxx * syy)
    x0 = -intercept / slope if slope != 0 else float("nan")
    return LinearFit(slope, float(intercept), r, x0, degenerate)
