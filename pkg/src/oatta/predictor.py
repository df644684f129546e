"""Synthetic base predictor and ingestion of external prediction streams.

The predictor draws Gaussian-perturbed logits with a boost on the true class
and returns their softmax. ``signal_strength`` sets top-1 accuracy and
``noise_scale`` sets how spread out (high-entropy) the outputs are, so the two
can be tuned independently. ``confusion_strength`` adds a second boost on a
fixed "confuser" class of each true class, which makes errors systematic
(class ``y`` is mostly mistaken for ``confuser[y]``) instead of spread evenly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import rng_for
from .simplex import SIMPLEX_TOL

S_MAX = 50.0
RENORM_SLACK = 1e-3


@dataclass(frozen=True)
class PredictorSpec:
    num_classes: int = 10
    signal_strength: float = 2.0
    noise_scale: float = 1.0
    class_bias: tuple[float, ...] | None = None
    seed: int = 0
    confusion_strength: float = 0.0
    confuser: tuple[int, ...] | None = None

    def __post_init__(self):
        if int(self.num_classes) != self.num_classes or self.num_classes < 2:
            raise ValueError(f"num_classes must be an integer >= 2, got {self.num_classes}")
        if not self.signal_strength >= 0:
            raise ValueError(f"signal_strength must be >= 0, got {self.signal_strength}")
        if not self.noise_scale >= 0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.class_bias is not None:
            b = tuple(float(x) for x in self.class_bias)
            if len(b) != self.num_classes or not all(np.isfinite(b)):
                raise ValueError(f"class_bias must be {self.num_classes} finite values")
            object.__setattr__(self, "class_bias", b)
        if not self.confusion_strength >= 0:
            raise ValueError(f"confusion_strength must be >= 0, got {self.confusion_strength}")
        if self.confuser is not None:
            c = tuple(int(x) for x in self.confuser)
            K = self.num_classes
            if len(c) != K or any(not 0 <= x < K for x in c) or any(x == i for i, x in enumerate(c)):
                raise ValueError("confuser must map every class to a different class in range")
            object.__setattr__(self, "confuser", c)

    @property
    def bias(self) -> np.ndarray:
        if self.class_bias is None:
            return np.zeros(self.num_classes)
        return np.array(self.class_bias)

    @property
    def confusion_map(self) -> np.ndarray:
        if self.confuser is None:
            K = self.num_classes
            return (np.arange(K) + K // 2) % K
        return np.array(self.confuser)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k in ("class_bias", "confuser"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"{sorted(unknown)[0]}: unknown predictor field")
        d = dict(d)
        for k in ("class_bias", "confuser"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _logits(spec: PredictorSpec, labels: np.ndarray, noise: np.ndarray, s: float) -> np.ndarray:
    L = spec.bias + spec.noise_scale * noise
    rows = np.arange(len(labels))
    L[rows, labels] += s
    if spec.confusion_strength:
        L[rows, spec.confusion_map[labels]] += spec.confusion_strength
    return L


def emit(spec: PredictorSpec, true_label: int, rng: np.random.Generator) -> np.ndarray:
    """One output vector for ``true_label``; consumes ``num_classes`` normal draws from ``rng``."""
    if not 0 <= true_label < spec.num_classes:
        raise ValueError(f"true_label {true_label} out of range for {spec.num_classes} classes")
    L = spec.bias + spec.noise_scale * rng.standard_normal(spec.num_classes)
    L[true_label] += spec.signal_strength
    if spec.confusion_strength:
        L[spec.confusion_map[true_label]] += spec.confusion_strength
    return softmax(L)


def emit_stream(spec: PredictorSpec, labels, rng: np.random.Generator | None = None) -> np.ndarray:
    """Outputs for a whole label sequence; identical to calling :func:`emit` step by step."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= spec.num_classes):
        raise ValueError("labels out of range")
    rng = rng_for(spec.seed, "predictor") if rng is None else rng
    noise = rng.standard_normal((len(labels), spec.num_classes))
    return softmax(_logits(spec, labels, noise, spec.signal_strength))


@dataclass(frozen=True)
class CalibrationResult:
    signal_strength: float
    achieved_accuracy: float
    trials: int


class CalibrationError(ValueError):
    pass


def calibrate(K: int, noise_scale: float, target_accuracy: float, tolerance: float = 0.005,
              trials: int = 200_000, seed: int = 0, class_bias=None, s_max: float = S_MAX,
              max_iter: int = 100, confusion_strength: float = 0.0, confuser=None) -> CalibrationResult:
    """Bisect the true-class logit boost until Monte-Carlo accuracy hits the target.

    The same labels and noise draws are reused at every probe, which makes
    the estimated accuracy a non-decreasing step function of the boost.
    """
    if not 0 < target_accuracy < 1:
        raise ValueError(f"target_accuracy must lie in (0, 1), got {target_accuracy}")
    spec = PredictorSpec(K, 0.0, noise_scale, class_bias,
                         confusion_strength=confusion_strength, confuser=confuser)
    rng = rng_for(seed, "calibration")
    labels = rng.integers(0, K, size=trials)
    noise = rng.standard_normal((trials, K))

    def acc(s):
        return float(np.mean(np.argmax(_logits(spec, labels, noise, s), axis=1) == labels))

    lo, hi = 0.0, s_max
    a_lo, a_hi = acc(lo), acc(hi)
    if abs(a_lo - target_accuracy) <= tolerance:
        return CalibrationResult(lo, a_lo, trials)
    if a_hi < target_accuracy - tolerance:
        raise CalibrationError(
            f"target {target_accuracy} unreachable: accuracy {a_lo:.4f} at s=0, {a_hi:.4f} at s={s_max}")
    if a_lo > target_accuracy + tolerance:
        raise CalibrationError(
            f"target {target_accuracy} below the accuracy {a_lo:.4f} already reached at s=0")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        a = acc(mid)
        if abs(a - target_accuracy) <= tolerance:
            return CalibrationResult(mid, a, trials)
        if a < target_accuracy:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not converge; bracket [{lo}, {hi}]")


def _check_probs(probs, lineno: int, K: int | None) -> np.ndarray:
    try:
        v = np.asarray(probs, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValueError(f"line {lineno}: probabilities are not numeric") from None
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError(f"line {lineno}: expected a list of at least 2 probabilities")
    if K is not None and v.shape[0] != K:
        raise ValueError(f"line {lineno}: dimension mismatch, expected {K} classes, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"line {lineno}: non-finite probability")
    if np.any(v < 0):
        raise ValueError(f"line {lineno}: negative probability")
    s = v.sum()
    if abs(s - 1.0) >= RENORM_SLACK:
        raise ValueError(f"line {lineno}: probabilities sum to {s:.6g}")
    # rows already on the simplex are kept bit-for-bit
    return v if abs(s - 1.0) <= SIMPLEX_TOL else v / s


def load_external_stream(path) -> list[tuple[np.ndarray, int | None]]:
    """Read ``(probs, label)`` records from JSONL or CSV, keeping file order.

    JSONL lines look like ``{"t": 0, "probs": [...], "label": 3}`` (label
    optional). CSV files have the header ``t,label,p0,...,p{K-1}`` with an
    empty label cell when unknown. Rows off unit mass by less than 1e-3 are
    renormalized; anything worse is rejected with its line number.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline()
        fh.seek(0)
        if first.lstrip().startswith("{"):
            return _load_jsonl(fh)
        return _load_csv(fh)


def _load_jsonl(fh):
    out = []
    K = None
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"line {lineno}: malformed JSON ({e.msg})") from None
        if not isinstance(rec, dict) or "probs" not in rec:
            raise ValueError(f"line {lineno}: record has no 'probs' field")
        v = _check_probs(rec["probs"], lineno, K)
        K = v.shape[0]
        label = rec.get("label")
        if label is not None:
            if int(label) != label or not 0 <= label < K:
                raise ValueError(f"line {lineno}: label {label!r} out of range")
            label = int(label)
        out.append((v, label))
    return out


def _load_csv(fh):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        return []
    K = len(header) - 2
    if header[:2] != ["t", "label"] or K < 2 or header[2:] != [f"p{k}" for k in range(K)]:
        raise ValueError("line 1: expected header t,label,p0,...,p{K-1}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != K + 2:
            raise ValueError(f"line {lineno}: dimension mismatch, expected {K + 2} fields, got {len(row)}")
        v = _check_probs([_float(x, lineno) for x in row[2:]], lineno, K)
        label = None
        if row[1].strip():
            try:
                label = int(row[1])
            except ValueError:
                raise ValueError(f"line {lineno}: label {row[1]!r} is not an integer") from None
            if not 0 <= label < K:
                raise ValueError(f"line {lineno}: label {label} out of range")
        out.append((v, label))
    return out


def _float(x: str, lineno: int) -> float:
    try:
        return float(x)
    except ValueError:
        raise ValueError(f"line {lineno}: {x!r} is not a number") from None


def write_external_stream(path, probs, labels=None, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "jsonl")
    probs = np.asarray(probs, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "label", *[f"p{k}" for k in range(probs.shape[1])]])
            for t, row in enumerate(probs.tolist()):
                w.writerow([t, "" if labels is None else int(labels[t]), *[repr(x) for x in row]])
        else:
            for t, row in enumerate(probs.tolist()):
                rec = {"t": t, "probs": row}
                if labels is not None:
                    rec["label"] = int(labels[t])
                fh.write(json.dumps(rec) + "\n")
