"""Likelihood-ratio gate between the filtered posterior and the raw model output.

The gate scores how well the temporal prior explains each model output
compared with an order-agnostic class-frequency prior, smooths that evidence
over time, and squashes it into a mixing weight. With no exploitable order
the weight drifts toward zero and the output falls back to the base model.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .filter import (
    FilterConfig,
    FilterState,
    StepOutput,
    Trace,
    advance,
    as_probvec,
    init_filter,
    validate_stream,
)
from .simplex import normalize, uniform

CARRY_MODES = ("gated", "ungated")
ACCUMULATORS = ("ewma", "window")


@dataclass(frozen=True)
class GateConfig:
    """Gate hyperparameters.

    ``carry`` picks which posterior feeds the next prediction step;
    ``accumulator="window"`` swaps the exponentially weighted evidence for a
    strict length-``window`` moving average (``window`` must then be an integer).
    """

    margin: float = 0.0
    sigmoid_temperature: float = 0.05
    window: float = 50.0
    baseline_rate: float = 0.02
    epsilon: float = 1e-8
    carry: str = "gated"
    accumulator: str = "ewma"

    def __post_init__(self):
        if not math.isfinite(self.margin):
            raise ValueError("margin must be finite")
        if not self.sigmoid_temperature > 0:
            raise ValueError(f"sigmoid_temperature must be > 0, got {self.sigmoid_temperature}")
        if not self.window >= 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not 0 < self.baseline_rate <= 1:
            raise ValueError(f"baseline_rate must lie in (0, 1], got {self.baseline_rate}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.carry not in CARRY_MODES:
            raise ValueError(f"carry must be one of {CARRY_MODES}, got {self.carry!r}")
        if self.accumulator not in ACCUMULATORS:
            raise ValueError(f"accumulator must be one of {ACCUMULATORS}, got {self.accumulator!r}")
        if self.accumulator == "window" and self.window != int(self.window):
            raise ValueError("a strict sliding window needs an integer window length")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "GateConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown gate config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class GateState:
    config: GateConfig
    filter: FilterState
    baseline_prior: np.ndarray
    llr: float = 0.0
    buffer: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def copy(self) -> "GateState":
        return replace(
            self, filter=self.filter.copy(),
            baseline_prior=self.baseline_prior.copy(), buffer=self.buffer.copy(),
        )

    def to_json(self) -> str:
        return json.dumps({
            "gate_config": self.config.to_dict(),
            "filter": self.filter.to_dict(),
            "baseline_prior": self.baseline_prior.tolist(),
            "llr": self.llr,
            "buffer": self.buffer.tolist(),
        })

    @classmethod
    def from_json(cls, s: str) -> "GateState":
        d = json.loads(s)
        return cls(
            config=GateConfig.from_dict(d["gate_config"]),
            filter=FilterState.from_dict(d["filter"]),
            baseline_prior=np.array(d["baseline_prior"], dtype=np.float64),
            llr=float(d["llr"]),
            buffer=np.array(d["buffer"], dtype=np.float64),
        )


@dataclass(frozen=True)
class GatedStepOutput(StepOutput):
    evidence_delta: float = 0.0
    llr: float = 0.0
    mixing_weight: float = 0.5
    gated: np.ndarray | None = None


def init_gate(filter_config: FilterConfig, config: GateConfig | None = None) -> GateState:
    config = config or GateConfig()
    K = filter_config.num_classes
    buf = np.zeros(int(config.window)) if config.accumulator == "window" else np.zeros(0)
    return GateState(config=config, filter=init_filter(filter_config), baseline_prior=uniform(K), buffer=buf)


def update_baseline_prior(pibar, q_t, eta: float) -> np.ndarray:
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    pibar = as_probvec(pibar)
    q_t = as_probvec(q_t)
    return normalize((1.0 - eta) * pibar + eta * q_t)


def evidence_delta(q_t, prior, baseline, epsilon: float = 1e-8) -> float:
    """Log-score of the temporal prior minus that of the baseline prior."""
    q_t = np.asarray(q_t, dtype=np.float64)
    return float(np.log(q_t @ np.asarray(prior) + epsilon) - np.log(q_t @ np.asarray(baseline) + epsilon))


def update_llr(llr_prev: float, delta: float, window: float) -> float:
    if not window >= 1:
        raise ValueError(f"window must be >= 1, got {window}")
    return (1.0 - 1.0 / window) * llr_prev + delta / window


def mixing_weight(llr: float, margin: float, temperature: float) -> float:
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = (llr - margin) / temperature
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def gated_step(state: GateState, q_t) -> tuple[GateState, GatedStepOutput]:
    K = state.filter.config.num_classes
    q = np.asarray(q_t, dtype=np.float64)
    if q.shape != (K,):
        raise ValueError(f"dimension mismatch: expected {K} classes, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("q_t contains non-finite entries")
    q = as_probvec(q)
    new = state.copy()
    tr = advance(new.filter, q[None, :], gate=new)
    out = GatedStepOutput(
        raw=q, prior=tr.prior[0], posterior=tr.posterior[0], weight=float(tr.weight[0]),
        predicted_class=int(np.argmax(tr.output[0])),
        evidence_delta=float(tr.delta[0]), llr=float(tr.llr[0]),
        mixing_weight=float(tr.mixing[0]), gated=tr.output[0],
    )
    return new, out


def gated_trace(filter_config: FilterConfig, stream, config: GateConfig | None = None,
                state: GateState | None = None) -> Trace:
    Q = validate_stream(stream, filter_config.num_classes)
    if Q.shape[0] == 0:
        Q = np.zeros((0, filter_config.num_classes))
    st = init_gate(filter_config, config) if state is None else state
    return advance(st.filter, Q, gate=st)


def run_gated_stream(filter_config: FilterConfig, stream: Sequence,
                     config: GateConfig | None = None) -> list[GatedStepOutput]:
    tr = gated_trace(filter_config, stream, config)
    return [
        GatedStepOutput(
            raw=tr.raw[i], prior=tr.prior[i], posterior=tr.posterior[i], weight=float(tr.weight[i]),
            predicted_class=int(np.argmax(tr.output[i])), evidence_delta=float(tr.delta[i]),
            llr=float(tr.llr[i]), mixing_weight=float(tr.mixing[i]), gated=tr.output[i],
        )
        for i in range(len(tr))
    ]
