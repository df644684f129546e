"""Command-line entry point: ``oatta simulate|run|sweep|evaluate``.

Data files depend only on (config, seeds). Wall-clock time and library
versions go to ``manifest.json`` so reruns can be compared byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_seeds
from .evaluation import RunRecord, run_variants, simulate_seed, sweep, trace_rows
from .filter import FilterConfig
from .predictor import load_external_stream
from .stats import holm_adjust, wilcoxon_signed_rank
from .streams import sample_stream, write_stream

COLUMN_NAMES = {"base": "Base", "ungated": "+Ours (w/o LLR)", "gated": "+Ours"}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_manifest(out: Path, command: str, cfg: ExperimentConfig | None, seeds, files,
                   name: str = "manifest.json") -> None:
    import numba

    manifest = {
        "command": command,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config_hash": cfg.config_hash() if cfg is not None else None,
        "seeds": list(seeds),
        "files": sorted(str(f) for f in files),
        "versions": {"artifact": __version__, "numpy": np.__version__, "numba": numba.__version__,
                     "python": platform.python_version()},
    }
    _write_text(out / name, _dump(manifest))


def _prepare(args) -> tuple[ExperimentConfig, tuple[int, ...], Path]:
    cfg = load_config(args.config)
    seeds = parse_seeds(args.seed) if args.seed else cfg.seeds
    if getattr(args, "gate", None):
        cfg.gate_enabled = args.gate == "on"
    if getattr(args, "format", None):
        cfg.format = args.format
    out = Path(args.out) if args.out else cfg.out
    out.mkdir(parents=True, exist_ok=True)
    return cfg, seeds, out


def cmd_simulate(args) -> int:
    cfg, seeds, out = _prepare(args)
    if cfg.stream is None:
        raise ConfigError("stream: simulate needs a stream spec")
    files = []
    for seed in seeds:
        spec = dataclasses.replace(cfg.stream, seed=seed)
        path = out / f"stream_seed{seed}.{cfg.format}"
        with open(path, "w", newline="") as fh:
            write_stream(sample_stream(spec), fh, cfg.format)
        files.append(path.name)
        print(f"seed {seed}: spec hash {spec.spec_hash()} -> {path}")
    write_manifest(out, "simulate", cfg, seeds, files)
    return 0


def _sources(cfg: ExperimentConfig, seeds):
    """Yield ``(seed, labels, Q)``; an external file yields a single record under the first seed."""
    if cfg.external is not None:
        try:
            rows = load_external_stream(cfg.external)
        except ValueError as e:
            raise ValueError(f"{cfg.external}: {e}") from None
        if not rows:
            raise ValueError(f"{cfg.external}: no records")
        if any(lbl is None for _, lbl in rows):
            raise ValueError(f"{cfg.external}: scoring needs a label on every record")
        yield seeds[0], np.array([lbl for _, lbl in rows]), np.stack([p for p, _ in rows])
        return
    if len(cfg.predictors) != 1:
        raise ConfigError("predictors: 'run' takes a single predictor; use 'sweep' for several")
    pspec = cfg.predictors[0].resolve(cfg.stream.num_classes)
    for seed in seeds:
        yield (seed, *simulate_seed(cfg.stream, pspec, seed))


def _write_record(rec: RunRecord, path: Path, fmt: str) -> None:
    with open(path, "w", newline="") as fh:
        (rec.to_csv if fmt == "csv" else rec.to_jsonl)(fh)
    back = RunRecord.read(path)
    if len(back) != len(rec) or back.accuracies() != rec.accuracies():
        raise RuntimeError(f"{path}: written record does not read back identically")


def _score_table(records: dict[int, RunRecord]) -> dict:
    """Per-seed accuracies and gains plus mean/std and paired significance across seeds."""
    per_seed = []
    for seed, rec in records.items():
        acc = rec.accuracies()
        row = {"seed": seed, **{COLUMN_NAMES[k]: 100.0 * v for k, v in acc.items()}}
        row.update({f"gain {COLUMN_NAMES[k]}": 100.0 * (acc[k] - acc["base"]) for k in acc if k != "base"})
        per_seed.append(row)
    cols = [k for k in per_seed[0] if k != "seed"]
    mean = {c: float(np.mean([r[c] for r in per_seed])) for c in cols}
    std = {c: float(np.std([r[c] for r in per_seed], ddof=1)) if len(per_seed) > 1 else 0.0 for c in cols}
    gain_cols = [c for c in cols if c.startswith("gain ")]
    tests = [wilcoxon_signed_rank([r[c] for r in per_seed]) for c in gain_cols]
    adj = holm_adjust([t.pvalue for t in tests])
    sig = {c: {"p_raw": t.pvalue, "p_holm": float(a), "significant": bool(a < 0.05), "method": t.method}
           for c, t, a in zip(gain_cols, tests, adj)}
    return {"columns": ["seed", *cols], "per_seed": per_seed, "mean": mean, "std": std, "significance": sig}


def cmd_run(args) -> int:
    cfg, seeds, out = _prepare(args)
    files, records = [], {}
    K = None
    for seed, labels, Q in _sources(cfg, seeds):
        K = Q.shape[1]
        fcfg = cfg.filter or FilterConfig(K)
        if fcfg.num_classes != K:
            raise ConfigError(f"filter: num_classes is {fcfg.num_classes} but predictions have {K} classes")
        try:
            rec = run_variants(labels, Q, fcfg, cfg.gate, gate=cfg.gate_enabled)
        except ValueError as e:
            raise ValueError(f"seed {seed}: {e}") from None
        path = out / f"run_seed{seed}.{cfg.format}"
        _write_record(rec, path, cfg.format)
        tpath = out / f"trace_seed{seed}.csv"
        with open(tpath, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "G_raw", "G_smoothed"])
            for t, g, gs in trace_rows(rec.diag_mass, K):
                w.writerow([t, repr(g), repr(gs)])
        files += [path.name, tpath.name]
        records[seed] = rec
    summary = {"num_classes": K, "gate_enabled": cfg.gate_enabled, **_score_table(records)}
    _write_text(out / "summary.json", _dump(summary))
    files.append("summary.json")
    write_manifest(out, "run", cfg, list(records), files)
    for c in summary["columns"][1:]:
        print(f"{c:>24s}: {summary['mean'][c]:8.3f} +- {summary['std'][c]:.3f}")
    return 0


def cmd_sweep(args) -> int:
    cfg, seeds, out = _prepare(args)
    cfg.seeds = seeds
    res = sweep(cfg.sweep_config())
    _write_text(out / "sweep_rows.csv", res.rows_csv())
    _write_text(out / "sweep_aggregates.csv", res.aggregates_csv())
    _write_text(out / "sweep_summary.json", _dump(res.summary()))
    write_manifest(out, "sweep", cfg, seeds, ["sweep_rows.csv", "sweep_aggregates.csv", "sweep_summary.json"])
    for a in res.aggregates:
        s = res.significance_for(a["grid_value"], a["variant"], a["predictor"])
        star = "*" if s["significant"] else " "
        print(f"{res.config.grid_param or '-'}={a['grid_value']!s:>6} {a['predictor']:>8} {a['variant']:>8}  "
              f"base {100 * a['base_mean']:6.2f}  gain {a['gain_mean']:+6.2f} +- {a['gain_std']:.2f}{star}")
    for v, fit in res.regression.items():
        print(f"regression ({v}): slope {fit['slope']:.3f}  r {fit['pearson_r']:.3f}  x_at_zero {fit['x_at_zero']:.3f}")
    return 0


def cmd_evaluate(args) -> int:
    paths = []
    for p in map(Path, args.records):
        paths += sorted(p.glob("run_seed*.*")) if p.is_dir() else [p]
    if not paths:
        raise ValueError("no run records found")
    records = {}
    for i, p in enumerate(paths):
        try:
            records[p.name] = RunRecord.read(p)
        except (ValueError, KeyError) as e:
            raise ValueError(f"{p}: {e}") from None
    table = _score_table(records)
    for r in table["per_seed"]:
        r["record"] = r.pop("seed")
    table["columns"][0] = "record"
    out = Path(args.out) if args.out else paths[0].parent
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "evaluation.json", _dump(table))
    write_manifest(out, "evaluate", None, [], ["evaluation.json"], name="evaluation_manifest.json")
    for c in table["columns"][1:]:
        print(f"{c:>24s}: {table['mean'][c]:8.3f} +- {table['std'][c]:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oatta", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, gate=True):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", help="comma-separated seeds, overriding the config")
        p.add_argument("--out", help="output directory, overriding the config")
        p.add_argument("--format", choices=("csv", "jsonl"), help="per-step file format")
        if gate:
            p.add_argument("--gate", choices=("on", "off"), help="likelihood-ratio gate")

    common(sub.add_parser("simulate", help="write label streams"), gate=False)
    common(sub.add_parser("run", help="filter one stream per seed and score it"))
    common(sub.add_parser("sweep", help="grid x seeds sweep with significance tests"))
    ev = sub.add_parser("evaluate", help="re-score existing run records")
    ev.add_argument("records", nargs="+", help="run record files or directories")
    ev.add_argument("--out", help="where to write evaluation.json")
    return ap


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "sweep": cmd_sweep, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
