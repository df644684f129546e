"""Metrics, paired multi-seed sweeps and significance summaries.

Every variant of one seed (base predictor, plain filter, gated filter) is
scored on the *same* prediction sequence, so accuracy differences isolate the
filter. Gains are reported in percentage points.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .filter import FilterConfig, Trace, filter_trace
from .gate import GateConfig, gated_trace
from .predictor import PredictorSpec, calibrate, emit_stream
from .simplex import row_normalize
from .stats import LinearFit, holm_adjust, linear_fit, wilcoxon_signed_rank
from .streams import StreamSpec, sample_stream

ALPHA = 0.05
VARIANTS = ("ungated", "gated")


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValueError("need at least one step")
    return float(np.mean(predicted == truth))


def structural_gain(A) -> float:
    """Mean self-transition mass in excess of chance, ``mean(diag A) - 1/K``."""
    A = np.asarray(A, dtype=np.float64)
    K = A.shape[0]
    return float(np.trace(A) / K - 1.0 / K)


def smoothed_trace(series, span: int) -> np.ndarray:
    """Exponential moving average with factor ``2 / (span + 1)``, seeded by the first value."""
    if span < 1:
        raise ValueError("span must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    a = 2.0 / (span + 1.0)
    out = np.empty_like(x)
    acc = 0.0
    for i, v in enumerate(x):
        acc = v if i == 0 else (1.0 - a) * acc + a * v
        out[i] = acc
    return out


def ema_fixed_point(labels, Q, config: FilterConfig) -> np.ndarray:
    """Deterministic fixed point of the count recursion on a stationary stream.

    Setting ``C = (1 - g) C + g (q_prev x q)`` in expectation gives
    ``C* ~ sum_t w_t q_{t-1} x q_t``; the result is its row normalization.
    ``labels`` is unused apart from length checks and kept for symmetry with
    the run helpers.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if len(labels) != len(Q):
        raise ValueError("labels and predictions differ in length")
    logq = np.log(np.clip(Q, 1e-300, None))
    w = np.exp((Q * logq).sum(axis=1) / config.entropy_temperature)
    C = (w[1:, None] * Q[:-1]).T @ Q[1:]
    return row_normalize(C)


@dataclass
class RunRecord:
    """Per-step log of one seed. Gate columns are ``None`` when the gate was off."""

    labels: np.ndarray
    raw_pred: np.ndarray
    filtered_pred: np.ndarray
    weight: np.ndarray
    diag_mass: np.ndarray
    gated_pred: np.ndarray | None = None
    mixing: np.ndarray | None = None
    llr: np.ndarray | None = None

    COLUMNS = ("t", "label", "raw", "filtered", "gated", "w", "lambda", "llr", "diag_mass")

    def __post_init__(self):
        T = len(self.labels)
        for name in ("raw_pred", "filtered_pred", "weight", "diag_mass", "gated_pred", "mixing", "llr"):
            v = getattr(self, name)
            if v is not None and len(v) != T:
                raise ValueError(f"{name} has length {len(v)}, expected {T}")

    def __len__(self):
        return len(self.labels)

    def accuracies(self) -> dict:
        out = {
            "base": accuracy(self.raw_pred, self.labels),
            "ungated": accuracy(self.filtered_pred, self.labels),
        }
        if self.gated_pred is not None:
            out["gated"] = accuracy(self.gated_pred, self.labels)
        return out

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.COLUMNS)
        gated = self.gated_pred is not None
        for t in range(len(self)):
            w.writerow([
                t, int(self.labels[t]), int(self.raw_pred[t]), int(self.filtered_pred[t]),
                int(self.gated_pred[t]) if gated else "",
                repr(float(self.weight[t])),
                repr(float(self.mixing[t])) if gated else "",
                repr(float(self.llr[t])) if gated else "",
                repr(float(self.diag_mass[t])),
            ])

    def to_jsonl(self, fh) -> None:
        gated = self.gated_pred is not None
        for t in range(len(self)):
            rec = {"t": t, "label": int(self.labels[t]), "raw": int(self.raw_pred[t]),
                   "filtered": int(self.filtered_pred[t]), "w": float(self.weight[t]),
                   "diag_mass": float(self.diag_mass[t])}
            if gated:
                rec.update(gated=int(self.gated_pred[t]), **{"lambda": float(self.mixing[t])}, llr=float(self.llr[t]))
            fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_jsonl(cls, fh) -> "RunRecord":
        recs = []
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    recs.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ValueError(f"line {lineno}: malformed JSON ({e.msg})") from None
        gated = bool(recs) and "gated" in recs[0]

        def col(name, typ):
            try:
                return np.array([typ(r[name]) for r in recs])
            except KeyError:
                raise ValueError(f"run record is missing field {name!r}") from None

        return cls(
            labels=col("label", int), raw_pred=col("raw", int), filtered_pred=col("filtered", int),
            weight=col("w", float), diag_mass=col("diag_mass", float),
            gated_pred=col("gated", int) if gated else None,
            mixing=col("lambda", float) if gated else None,
            llr=col("llr", float) if gated else None,
        )

    @classmethod
    def read(cls, path) -> "RunRecord":
        """Load a record written by :meth:`to_csv` or :meth:`to_jsonl` (format sniffed)."""
        with open(path, newline="") as fh:
            first = fh.readline()
            fh.seek(0)
            return cls.from_jsonl(fh) if first.lstrip().startswith("{") else cls.from_csv(fh)

    @classmethod
    def from_csv(cls, fh) -> "RunRecord":
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != cls.COLUMNS:
            raise ValueError(f"run record header must be {','.join(cls.COLUMNS)}")
        rows = list(reader)
        gated = bool(rows) and rows[0]["gated"] != ""

        def col(name, typ):
            return np.array([typ(r[name]) for r in rows])

        return cls(
            labels=col("label", int), raw_pred=col("raw", int), filtered_pred=col("filtered", int),
            weight=col("w", float), diag_mass=col("diag_mass", float),
            gated_pred=col("gated", int) if gated else None,
            mixing=col("lambda", float) if gated else None,
            llr=col("llr", float) if gated else None,
        )


def run_variants(labels, Q, filter_config: FilterConfig, gate_config: GateConfig | None = None,
                 gate: bool = True) -> RunRecord:
    """Score the base predictor, the plain filter and (optionally) the gated filter on one prediction stream."""
    labels = np.asarray(labels, dtype=np.int64)
    Q = np.asarray(Q, dtype=np.float64)
    if len(labels) != len(Q):
        raise ValueError("labels and predictions differ in length")
    plain = filter_trace(filter_config, Q)
    rec = RunRecord(
        labels=labels, raw_pred=np.argmax(Q, axis=1), filtered_pred=plain.predicted,
        weight=plain.weight, diag_mass=plain.diag_mass,
    )
    if gate:
        g = gated_trace(filter_config, Q, gate_config)
        rec.gated_pred = g.predicted
        rec.mixing = g.mixing
        rec.llr = g.llr
    return rec


@dataclass(frozen=True)
class GainSummary:
    base_accuracy: float
    method_accuracy: float
    gain: float  # percentage points
    seed: int
    variant: str = "ungated"
    grid_value: float | None = None
    predictor: str = "base"


def gains(record: RunRecord, seed: int, grid_value=None, predictor: str = "base") -> list[GainSummary]:
    acc = record.accuracies()
    return [
        GainSummary(acc["base"], acc[v], 100.0 * (acc[v] - acc["base"]), seed, v, grid_value, predictor)
        for v in VARIANTS if v in acc
    ]


@dataclass(frozen=True)
class PredictorSetup:
    """How to build the synthetic predictor for one sweep cell.

    Either ``signal_strength`` is fixed, or it is calibrated so that top-1
    accuracy matches ``target_accuracy``. Unless ``confusion_strength`` is
    given, the confuser boost is ``confusion_per_error * (1 - target_accuracy)``:
    a weaker predictor makes more systematic mistakes.
    """

    name: str = "base"
    noise_scale: float = 1.0
    target_accuracy: float | None = 0.77
    signal_strength: float | None = None
    confusion_strength: float | None = None
    confusion_per_error: float = 5.0
    class_bias: tuple[float, ...] | None = None
    calibration_trials: int = 200_000
    calibration_tolerance: float = 0.005
    calibration_seed: int = 0

    def __post_init__(self):
        if (self.target_accuracy is None) == (self.signal_strength is None):
            raise ValueError("predictor: set exactly one of target_accuracy and signal_strength")
        if self.class_bias is not None:
            object.__setattr__(self, "class_bias", tuple(float(x) for x in self.class_bias))

    @property
    def confusion(self) -> float:
        if self.confusion_strength is not None:
            return float(self.confusion_strength)
        if self.target_accuracy is None:
            return 0.0
        return self.confusion_per_error * (1.0 - self.target_accuracy)

    def resolve(self, K: int, seed: int = 0) -> PredictorSpec:
        if self.signal_strength is not None:
            s = self.signal_strength
        else:
            s = _calibrated_strength(K, self.noise_scale, self.target_accuracy, self.calibration_tolerance,
                                     self.calibration_trials, self.calibration_seed, self.class_bias,
                                     self.confusion)
        return PredictorSpec(K, s, self.noise_scale, self.class_bias, seed, confusion_strength=self.confusion)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["class_bias"] is not None:
            d["class_bias"] = list(d["class_bias"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorSetup":
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"predictor.{sorted(unknown)[0]}: unknown field")
        d = dict(d)
        if d.get("class_bias") is not None:
            d["class_bias"] = tuple(d["class_bias"])
        return cls(**d)


OPERATING_POINT = PredictorSetup()


@functools.lru_cache(maxsize=256)
def _calibrated_strength(K, noise, target, tol, trials, seed, bias, confusion) -> float:
    return calibrate(K, noise, target, tol, trials, seed, class_bias=bias,
                     confusion_strength=confusion).signal_strength


def simulate_seed(stream: StreamSpec, predictor: PredictorSpec, seed: int):
    """Labels and predictions of one seed (stream and predictor draw from separate substreams)."""
    labels = sample_stream(dataclasses.replace(stream, seed=seed)).labels
    Q = emit_stream(dataclasses.replace(predictor, seed=seed), labels)
    return labels, Q


@dataclass(frozen=True)
class SweepConfig:
    """A grid of stream or predictor settings crossed with seeds.

    ``grid_param`` names a numeric :class:`StreamSpec` field (e.g. ``alpha``)
    or ``"base_accuracy"``, which overrides every predictor's target accuracy.
    """

    stream: StreamSpec
    grid_param: str | None = None
    grid: tuple[float, ...] = (None,)
    seeds: tuple[int, ...] = tuple(range(10))
    predictors: tuple[PredictorSetup, ...] = (OPERATING_POINT,)
    filter: FilterConfig | None = None
    gate: GateConfig = GateConfig()
    gate_enabled: bool = True

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ValueError("grid must be non-empty")
        if len(self.seeds) == 0:
            raise ValueError("seeds must be non-empty")
        if len(self.predictors) == 0:
            raise ValueError("predictors must be non-empty")
        if len({p.name for p in self.predictors}) != len(self.predictors):
            raise ValueError("predictor names must be unique")
        if self.grid_param is not None and self.grid_param != "base_accuracy":
            if self.grid_param not in StreamSpec.__dataclass_fields__ or self.grid_param in ("kind", "seed"):
                raise ValueError(f"grid_param: {self.grid_param!r} is not a tunable stream field")
        if self.filter is None:
            object.__setattr__(self, "filter", FilterConfig(self.stream.num_classes))

    def cell(self, value):
        """Stream spec and predictor setups at one grid value."""
        stream, preds = self.stream, self.predictors
        if self.grid_param == "base_accuracy":
            preds = tuple(dataclasses.replace(p, target_accuracy=value, signal_strength=None) for p in preds)
        elif self.grid_param is not None:
            stream = dataclasses.replace(stream, **{self.grid_param: value})
        return stream, preds


def _run_cell(args):
    gi, value, seed, stream, pspecs, names, fcfg, gcfg, gate_on = args
    labels = sample_stream(dataclasses.replace(stream, seed=seed)).labels
    rows = []
    for name, pspec in zip(names, pspecs):
        Q = emit_stream(dataclasses.replace(pspec, seed=seed), labels)
        rec = run_variants(labels, Q, fcfg, gcfg, gate=gate_on)
        rows.extend(gains(rec, seed, value, name))
    return gi, seed, rows


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("OATTA_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list[GainSummary]
    aggregates: list[dict] = field(default_factory=list)
    significance: list[dict] = field(default_factory=list)
    delta_avg: list[dict] = field(default_factory=list)
    regression: dict = field(default_factory=dict)

    def gains_for(self, grid_value, variant: str, predictor: str | None = None) -> np.ndarray:
        """Per-seed gains (seed order) at one grid value."""
        rs = [r for r in self.rows if r.grid_value == grid_value and r.variant == variant
              and (predictor is None or r.predictor == predictor)]
        return np.array([r.gain for r in sorted(rs, key=lambda r: r.seed)])

    def significance_for(self, grid_value, variant: str, predictor: str | None = None) -> dict:
        predictor = predictor or self.config.predictors[0].name
        for s in self.significance:
            if s["grid_value"] == grid_value and s["variant"] == variant and s["predictor"] == predictor:
                return s
        raise KeyError((grid_value, variant, predictor))

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid_param", "grid_value", "predictor", "seed", "variant", "base_accuracy", "method_accuracy", "gain_pp"])
        for r in self.rows:
            w.writerow([self.config.grid_param or "", _fmt(r.grid_value), r.predictor, r.seed, r.variant,
                        repr(r.base_accuracy), repr(r.method_accuracy), repr(r.gain)])
        return buf.getvalue()

    def aggregates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["grid_value", "predictor", "variant", "n", "base_mean", "base_std", "method_mean", "method_std",
                "gain_mean", "gain_std", "p_raw", "p_holm", "significant"]
        w.writerow(cols)
        for a in self.aggregates:
            s = self.significance_for(a["grid_value"], a["variant"], a["predictor"])
            w.writerow([_fmt(a["grid_value"]), a["predictor"], a["variant"], a["n"],
                        *(repr(a[k]) for k in cols[4:10]), repr(s["p_raw"]), repr(s["p_holm"]), int(s["significant"])])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "grid_param": self.config.grid_param,
            "grid": [_jsonable(g) for g in self.config.grid],
            "seeds": list(self.config.seeds),
            "predictors": [p.to_dict() for p in self.config.predictors],
            "filter": self.config.filter.to_dict(),
            "gate": {**self.config.gate.to_dict(), "enabled": self.config.gate_enabled},
            "stream": self.config.stream.to_dict(),
            "aggregates": self.aggregates,
            "significance": self.significance,
            "delta_avg": self.delta_avg,
            "regression": self.regression,
        }


def _fmt(v):
    return "" if v is None else repr(v)


def _jsonable(v):
    return None if v is None else float(v)


def _mean_std(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    return float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else 0.0


def sweep(config: SweepConfig, workers: int | None = None) -> SweepResult:
    """Run every (grid value, seed) cell and aggregate deterministically in grid order."""
    workers = default_workers() if workers is None else workers
    K = config.stream.num_classes
    tasks = []
    for gi, value in enumerate(config.grid):
        stream, preds = config.cell(value)
        try:
            pspecs = tuple(p.resolve(K) for p in preds)
        except ValueError as e:
            raise ValueError(f"grid[{gi}]={value}: {e}") from e
        names = tuple(p.name for p in preds)
        for seed in config.seeds:
            tasks.append((gi, value, seed, stream, pspecs, names, config.filter, config.gate, config.gate_enabled))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    results.sort(key=lambda r: (r[0], config.seeds.index(r[1])))
    rows = [row for _, _, rs in results for row in rs]
    res = SweepResult(config, rows)
    _aggregate(res)
    return res


def _aggregate(res: SweepResult) -> None:
    cfg = res.config
    variants = [v for v in VARIANTS if cfg.gate_enabled or v != "gated"]
    names = [p.name for p in cfg.predictors]
    for value in cfg.grid:
        family = []
        for name in names:
            for v in variants:
                rs = sorted((r for r in res.rows if r.grid_value == value and r.variant == v and r.predictor == name),
                            key=lambda r: r.seed)
                base_m, base_s = _mean_std([r.base_accuracy for r in rs])
                meth_m, meth_s = _mean_std([r.method_accuracy for r in rs])
                g = [r.gain for r in rs]
                gain_m, gain_s = _mean_std(g)
                res.aggregates.append({
                    "grid_value": _jsonable(value), "predictor": name, "variant": v, "n": len(rs),
                    "base_mean": base_m, "base_std": base_s, "method_mean": meth_m, "method_std": meth_s,
                    "gain_mean": gain_m, "gain_std": gain_s,
                })
                w = wilcoxon_signed_rank(g)
                family.append({"grid_value": _jsonable(value), "predictor": name, "variant": v,
                               "statistic": w.statistic, "p_raw": w.pvalue, "method": w.method,
                               "all_zero": w.all_zero, "gain_mean": gain_m})
        # Holm across all method-vs-base pairs of one stream setting
        adj = holm_adjust([f["p_raw"] for f in family])
        for f, a in zip(family, adj):
            f["p_holm"] = float(a)
            f["significant"] = bool(a < ALPHA)
            f["improved"] = bool(f["significant"] and f.pop("gain_mean") > 0)
        res.significance.extend(family)

        for v in variants:
            per_pred = {n: {r.seed: r.gain for r in res.rows
                            if r.grid_value == value and r.variant == v and r.predictor == n} for n in names}
            seeds = list(cfg.seeds)
            pairs_first = [np.mean([per_pred[n][s] for n in names]) for s in seeds]
            seeds_first = [np.mean([per_pred[n][s] for s in seeds]) for n in names]
            m1, s1 = _mean_std(pairs_first)
            m2, s2 = _mean_std(seeds_first)
            res.delta_avg.append({
                "grid_value": _jsonable(value), "variant": v,
                "pairs_then_seeds": {"mean": m1, "std": s1, "std_over": "seeds"},
                "seeds_then_pairs": {"mean": m2, "std": s2, "std_over": "predictors"},
                "reported": "pairs_then_seeds",
            })

    # the break-even fit only makes sense when the grid moves base accuracy
    if cfg.grid_param == "base_accuracy" and len(cfg.grid) >= 3:
        for v in variants:
            pts = [(a["base_mean"], a["gain_mean"]) for a in res.aggregates
                   if a["variant"] == v and a["predictor"] == names[0]]
            x, y = zip(*pts)
            try:
                fit = linear_fit(x, y)
            except ValueError:
                continue
            res.regression[v] = {**dataclasses.asdict(fit), "x": "mean base accuracy", "y": "mean gain (pp)",
                                 "predictor": names[0]}


def trace_rows(diag_mass, K: int, span: int = 300) -> list[tuple[int, float, float]]:
    """``(t, G_raw, G_smoothed)`` rows for structural-gain plots."""
    g = np.asarray(diag_mass, dtype=np.float64) - 1.0 / K
    sm = smoothed_trace(g, span)
    return [(t, float(a), float(b)) for t, (a, b) in enumerate(zip(g, sm))]
