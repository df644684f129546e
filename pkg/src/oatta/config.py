"""JSON experiment configuration.

Schema (every section optional except ``stream`` for synthetic runs)::

    {
      "stream":     {StreamSpec fields},
      "predictor":  {PredictorSetup fields}          # or
      "predictors": [{PredictorSetup fields}, ...]   # several base predictors (sweep)
      "external":   "path/to/preds.jsonl",           # replaces stream + predictor
      "filter":     {FilterConfig fields; num_classes defaults to the stream's},
      "gate":       {GateConfig fields, "enabled": true},
      "grid":       {"param": "alpha" | "base_accuracy" | <stream field>, "values": [...]},
      "seeds":      [0, 1, ...],
      "out":        "results",
      "format":     "csv" | "jsonl"
    }

Unset hyperparameters take the library defaults, so ``{"stream": {"kind": "s2"}}``
is a complete config.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import OPERATING_POINT, PredictorSetup, SweepConfig
from .filter import FilterConfig
from .gate import GateConfig
from .streams import StreamSpec

FORMATS = ("csv", "jsonl")
SECTIONS = ("stream", "predictor", "predictors", "external", "filter", "gate", "grid", "seeds", "out", "format")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    stream: StreamSpec | None
    predictors: tuple[PredictorSetup, ...] = (OPERATING_POINT,)
    external: Path | None = None
    filter: FilterConfig | None = None
    gate: GateConfig = field(default_factory=GateConfig)
    gate_enabled: bool = True
    grid_param: str | None = None
    grid: tuple | None = None
    seeds: tuple[int, ...] = (0,)
    out: Path = Path("results")
    format: str = "csv"
    raw: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int | None:
        if self.filter is not None:
            return self.filter.num_classes
        return self.stream.num_classes if self.stream is not None else None

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]

    def sweep_config(self) -> SweepConfig:
        if self.stream is None:
            raise ConfigError("stream: sweeps need a synthetic stream")
        if self.grid is None:
            raise ConfigError("grid: sweep needs a 'grid' section")
        return SweepConfig(self.stream, self.grid_param, self.grid, self.seeds, self.predictors,
                           self.filter, self.gate, self.gate_enabled)


def _section(name: str, fn, value):
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object, got {type(value).__name__}")
    try:
        return fn(value)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{name}: {e}") from None


def parse_seeds(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        seeds = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"seeds: expected a list of unsigned integers, got {value!r}") from None
    if not seeds:
        raise ConfigError("seeds: seed list must be non-empty")
    if any(not 0 <= s < 2**64 for s in seeds):
        raise ConfigError("seeds: seeds must be unsigned 64-bit integers")
    return seeds


def parse_config(d: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a JSON object")
    if "kind" in d and "stream" not in d:
        # a bare stream spec file
        d = {"stream": d}
    unknown = set(d) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown config section")

    stream = _section("stream", StreamSpec.from_dict, d["stream"]) if "stream" in d else None
    external = None
    if "external" in d:
        if not isinstance(d["external"], str):
            raise ConfigError("external: expected a file path")
        external = Path(d["external"])
        if base_dir is not None and not external.is_absolute():
            external = base_dir / external
    if "predictor" in d and "predictors" in d:
        raise ConfigError("predictors: give either 'predictor' or 'predictors', not both")
    if external is not None and ("predictor" in d or "predictors" in d):
        raise ConfigError("external: an external prediction file replaces the synthetic predictor")
    if external is None and stream is None:
        raise ConfigError("stream: required unless 'external' is given")

    predictors = (OPERATING_POINT,)
    if "predictor" in d:
        predictors = (_section("predictor", PredictorSetup.from_dict, d["predictor"]),)
    elif "predictors" in d:
        if not isinstance(d["predictors"], list) or not d["predictors"]:
            raise ConfigError("predictors: expected a non-empty list")
        predictors = tuple(_section(f"predictors[{i}]", PredictorSetup.from_dict, p)
                           for i, p in enumerate(d["predictors"]))
        if len({p.name for p in predictors}) != len(predictors):
            raise ConfigError("predictors: names must be unique")

    fd = dict(d.get("filter", {}))
    if stream is not None:
        fd.setdefault("num_classes", stream.num_classes)
        if fd["num_classes"] != stream.num_classes:
            raise ConfigError("filter: num_classes disagrees with stream.num_classes")
    filt = _section("filter", FilterConfig.from_dict, fd) if "num_classes" in fd else None

    gd = dict(d.get("gate", {}))
    enabled = gd.pop("enabled", True)
    if not isinstance(enabled, bool):
        raise ConfigError("gate: enabled must be true or false")
    gate = _section("gate", GateConfig.from_dict, gd)

    grid_param = grid = None
    if "grid" in d:
        g = d["grid"]
        if not isinstance(g, dict) or "values" not in g:
            raise ConfigError("grid: expected {\"param\": ..., \"values\": [...]}")
        if not g["values"]:
            raise ConfigError("grid: grid must be non-empty")
        grid_param = g.get("param")
        grid = tuple(float(v) for v in g["values"])

    seeds = parse_seeds(d.get("seeds", [0]))
    fmt = d.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format: expected one of {FORMATS}, got {fmt!r}")
    return ExperimentConfig(stream, predictors, external, filt, gate, enabled, grid_param, grid, seeds,
                            Path(d.get("out", "results")), fmt, raw=d)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}: malformed JSON ({e.msg})") from None
    return parse_config(d, base_dir=path.parent)
