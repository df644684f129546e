"""Order-aware test-time adaptation: a recursive Bayesian filter over per-step class probabilities.

The filter learns class-transition dynamics online from a frozen model's raw
outputs and uses them as a temporal prior. An optional likelihood-ratio gate
falls back to the raw outputs when the learned order stops paying off.
"""
from .evaluation import (
    OPERATING_POINT, GainSummary, PredictorSetup, RunRecord, SweepConfig, SweepResult,
    accuracy, run_variants, smoothed_trace, structural_gain, sweep,
)
from .filter import FilterConfig, FilterState, StepOutput, Trace, filter_step, filter_trace, init_filter, run_stream
from .gate import GateConfig, GateState, gated_step, gated_trace, init_gate, run_gated_stream
from .predictor import PredictorSpec, calibrate, emit, emit_stream, load_external_stream
from .stats import holm_adjust, linear_fit, wilcoxon_signed_rank
from .streams import StreamSpec, sample_stream

__version__ = "0.1.0"

__all__ = [
    "OPERATING_POINT", "FilterConfig", "FilterState", "GainSummary", "GateConfig", "GateState",
    "PredictorSetup", "PredictorSpec", "RunRecord", "StepOutput", "StreamSpec", "SweepConfig",
    "SweepResult", "Trace", "accuracy", "calibrate", "emit", "emit_stream", "filter_step",
    "filter_trace", "gated_step", "gated_trace", "holm_adjust", "init_filter", "init_gate",
    "linear_fit", "load_external_stream", "run_gated_stream", "run_stream", "run_variants",
    "sample_stream", "smoothed_trace", "structural_gain", "sweep", "wilcoxon_signed_rank",
]
