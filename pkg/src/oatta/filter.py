"""Recursive Bayesian filter with an online, entropy-gated transition estimate.

Each step projects the previous posterior through the current dynamics
estimate, fuses it with the likelihood implied by the base model's output,
and then refreshes the transition counts from the *raw* consecutive model
outputs. The filtered posterior never feeds back into the counts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .simplex import SIMPLEX_TOL, as_probvec, normalize, uniform

FIRST_UPDATE_MODES = ("skip", "uniform")


@dataclass(frozen=True)
class FilterConfig:
    """Hyperparameters of the filter.

    ``class_prior`` is either ``"uniform"`` or an explicit strictly positive
    probability vector used to convert model outputs into likelihoods.
    ``first_update="uniform"`` pairs the first output with the uniform
    initial vector; the default ``"skip"`` leaves the counts untouched on
    the first step.
    """

    num_classes: int
    class_prior: str | tuple[float, ...] = "uniform"
    pseudocount: float = 1.0
    forgetting_rate: float = 0.05
    entropy_temperature: float = 1.0
    epsilon: float = 1e-8
    first_update: str = "skip"

    def __post_init__(self):
        if int(self.num_classes) != self.num_classes or self.num_classes < 2:
            raise ValueError(f"num_classes must be an integer >= 2, got {self.num_classes}")
        if not self.pseudocount > 0:
            raise ValueError(f"pseudocount must be > 0, got {self.pseudocount}")
        if not 0 < self.forgetting_rate < 1:
            raise ValueError(f"forgetting_rate must lie in (0, 1), got {self.forgetting_rate}")
        if not self.entropy_temperature > 0:
            raise ValueError(f"entropy_temperature must be > 0, got {self.entropy_temperature}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.first_update not in FIRST_UPDATE_MODES:
            raise ValueError(f"first_update must be one of {FIRST_UPDATE_MODES}, got {self.first_update!r}")
        if isinstance(self.class_prior, str):
            if self.class_prior != "uniform":
                raise ValueError(f"class_prior must be 'uniform' or a probability vector, got {self.class_prior!r}")
        else:
            rho = as_probvec(self.class_prior)
            if rho.shape[0] != self.num_classes:
                raise ValueError(f"class_prior has {rho.shape[0]} entries, expected {self.num_classes}")
            if np.any(rho <= 0):
                raise ValueError("class_prior entries must all be > 0")
            object.__setattr__(self, "class_prior", tuple(float(x) for x in rho))

    @property
    def rho(self) -> np.ndarray:
        if self.class_prior == "uniform":
            return uniform(self.num_classes)
        return np.array(self.class_prior)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if not isinstance(self.class_prior, str):
            d["class_prior"] = list(self.class_prior)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        d = dict(d)
        if isinstance(d.get("class_prior"), list):
            d["class_prior"] = tuple(d["class_prior"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown filter config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class FilterState:
    config: FilterConfig
    counts: np.ndarray
    dynamics: np.ndarray
    p_prev: np.ndarray
    q_prev: np.ndarray
    t: int = 0
    degenerate_steps: int = 0

    def copy(self) -> "FilterState":
        return replace(
            self,
            counts=self.counts.copy(),
            dynamics=self.dynamics.copy(),
            p_prev=self.p_prev.copy(),
            q_prev=self.q_prev.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "counts": self.counts.tolist(),
            "dynamics": self.dynamics.tolist(),
            "p_prev": self.p_prev.tolist(),
            "q_prev": self.q_prev.tolist(),
            "t": self.t,
            "degenerate_steps": self.degenerate_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterState":
        return cls(
            config=FilterConfig.from_dict(d["config"]),
            counts=np.array(d["counts"], dtype=np.float64),
            dynamics=np.array(d["dynamics"], dtype=np.float64),
            p_prev=np.array(d["p_prev"], dtype=np.float64),
            q_prev=np.array(d["q_prev"], dtype=np.float64),
            t=int(d["t"]),
            degenerate_steps=int(d.get("degenerate_steps", 0)),
        )

    def to_json(self) -> str:
        # float repr round-trips exactly, so the snapshot is bit-exact
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "FilterState":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class StepOutput:
    raw: np.ndarray
    prior: np.ndarray
    posterior: np.ndarray
    weight: float
    predicted_class: int


@dataclass
class Trace:
    """Per-step arrays from a run over a whole stream.

    ``output`` is what the method emits: the filtered posterior for the plain
    filter, the gated mixture when the likelihood-ratio gate is on. Gate
    fields stay ``None`` for ungated runs.
    """

    raw: np.ndarray
    prior: np.ndarray
    posterior: np.ndarray
    output: np.ndarray
    weight: np.ndarray
    diag_mass: np.ndarray
    delta: np.ndarray | None = None
    llr: np.ndarray | None = None
    mixing: np.ndarray | None = None

    def __len__(self):
        return self.raw.shape[0]

    @property
    def predicted(self) -> np.ndarray:
        return np.argmax(self.output, axis=1)

    @property
    def structural_gain(self) -> np.ndarray:
        return self.diag_mass - 1.0 / self.raw.shape[1]


def init_filter(config: FilterConfig) -> FilterState:
    K = config.num_classes
    counts = config.pseudocount * np.eye(K)
    return FilterState(
        config=config,
        counts=counts,
        dynamics=counts / counts.sum(axis=1, keepdims=True),
        p_prev=uniform(K),
        q_prev=uniform(K),
    )


def to_likelihood(q, rho) -> np.ndarray:
    """Convert a posterior-style output into a normalized likelihood ``q / rho``."""
    q = as_probvec(q)
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != q.shape:
        raise ValueError(f"dimension mismatch: q has {q.shape[0]} entries, rho has {rho.shape[0]}")
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise ValueError("class prior entries must be finite and > 0")
    if np.all(rho == rho[0]):
        return q.copy()  # a flat prior cancels exactly
    return normalize(q / rho)


def validate_stream(stream, K: int | None = None) -> np.ndarray:
    """Stack a sequence of probability vectors into a ``(T, K)`` array, naming the first bad step."""
    Q = np.asarray(stream, dtype=np.float64)
    if Q.size == 0:
        return np.zeros((0, K or 0))
    if Q.ndim != 2:
        raise ValueError(f"stream must be a sequence of equal-length vectors, got shape {Q.shape}")
    if K is not None and Q.shape[1] != K:
        raise ValueError(f"step 0: dimension mismatch, expected {K} classes, got {Q.shape[1]}")
    bad = ~np.isfinite(Q).all(axis=1)
    if bad.any():
        raise ValueError(f"step {int(np.argmax(bad))}: non-finite entries")
    bad = (Q < 0).any(axis=1)
    if bad.any():
        raise ValueError(f"step {int(np.argmax(bad))}: negative entries")
    bad = np.abs(Q.sum(axis=1) - 1.0) > SIMPLEX_TOL
    if bad.any():
        raise ValueError(f"step {int(np.argmax(bad))}: entries do not sum to 1")
    return np.ascontiguousarray(Q)


def _kernel_args(config: FilterConfig):
    use_rho = config.class_prior != "uniform"
    inv_rho = 1.0 / config.rho
    return (
        inv_rho, use_rho, config.forgetting_rate, config.entropy_temperature,
        config.epsilon, config.first_update == "skip",
    )


_EMPTY = np.zeros(0)


def advance(state: FilterState, Q: np.ndarray, gate=None) -> Trace:
    """Run the recursion over validated rows ``Q``, mutating ``state`` (and ``gate``) in place."""
    T, K = Q.shape
    PI = np.empty((T, K))
    P = np.empty((T, K))
    PHAT = np.empty((T, K))
    Wt = np.empty(T)
    DIAG = np.empty(T)
    if gate is None:
        DELTA = LLR = LAM = np.empty(0)
        g_args = (False, False, np.empty(K), np.zeros(1), _EMPTY, 1.0, 1.0, 0.0, 1.0, 1.0, 0)
    else:
        DELTA = np.empty(T)
        LLR = np.empty(T)
        LAM = np.empty(T)
        scal = np.array([gate.llr])
        cfg = gate.config
        g_args = (
            True, cfg.carry == "gated", gate.baseline_prior, scal, gate.buffer,
            cfg.baseline_rate, cfg.window, cfg.margin, cfg.sigmoid_temperature, cfg.epsilon,
            _kernels.ACC_WINDOW if cfg.accumulator == "window" else _kernels.ACC_EWMA,
        )
    ndeg = _kernels.run_block(
        state.counts, state.dynamics, state.p_prev, state.q_prev, state.t, Q,
        *_kernel_args(state.config), *g_args,
        PI, P, PHAT, Wt, DELTA, LLR, LAM, DIAG,
    )
    state.t += T
    state.degenerate_steps += int(ndeg)
    if gate is not None:
        gate.llr = float(scal[0])
        return Trace(Q, PI, P, PHAT, Wt, DIAG, DELTA, LLR, LAM)
    return Trace(Q, PI, P, P, Wt, DIAG)


def filter_step(state: FilterState, q_t) -> tuple[FilterState, StepOutput]:
    """One prediction + measurement + count update. ``state`` is left untouched."""
    K = state.config.num_classes
    q = np.asarray(q_t, dtype=np.float64)
    if q.shape != (K,):
        raise ValueError(f"dimension mismatch: expected {K} classes, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("q_t contains non-finite entries")
    q = as_probvec(q)
    new = state.copy()
    tr = advance(new, q[None, :])
    out = StepOutput(
        raw=q, prior=tr.prior[0], posterior=tr.posterior[0],
        weight=float(tr.weight[0]), predicted_class=int(np.argmax(tr.posterior[0])),
    )
    return new, out


def filter_trace(config: FilterConfig, stream, state: FilterState | None = None) -> Trace:
    """Fold the filter over ``stream`` (fresh state unless one is given) and return per-step arrays."""
    Q = validate_stream(stream, config.num_classes)
    if Q.shape[0] == 0:
        Q = np.zeros((0, config.num_classes))
    st = init_filter(config) if state is None else state
    return advance(st, Q)


def run_stream(config: FilterConfig, stream: Sequence) -> list[StepOutput]:
    tr = filter_trace(config, stream)
    return [
        StepOutput(tr.raw[i], tr.prior[i], tr.posterior[i], float(tr.weight[i]), int(np.argmax(tr.posterior[i])))
        for i in range(len(tr))
    ]
