"""Controlled-stream table: gains of the filter on S1-S5 and an S2 stickiness sweep.

    python scripts/controlled_streams.py --seeds 10 --length 10000
"""
from oatta.evaluation import SweepConfig, sweep
from oatta.streams import StreamSpec

from _common import base_parser, write_csv, write_json

ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.85, 0.9, 0.95, 0.98)


def main():
    ap = base_parser(__doc__.splitlines()[0], "controlled_streams")
    args = ap.parse_args()
    seeds = tuple(range(args.seeds))
    rows, summary = [], {}
    cells = [(f"S1", StreamSpec("s1", 10, args.length), None, (None,))]
    cells.append(("S2", StreamSpec("s2", 10, args.length), "alpha", ALPHAS))
    cells += [(name, StreamSpec(kind, 10, args.length), None, (None,))
              for name, kind in (("S3", "s3"), ("S4", "s4"), ("S5", "s5"))]
    for name, spec, param, grid in cells:
        res = sweep(SweepConfig(spec, param, grid, seeds))
        summary[name] = res.summary()
        for a in res.aggregates:
            sig = res.significance_for(a["grid_value"], a["variant"])
            label = name if a["grid_value"] is None else f"{name} alpha={a['grid_value']}"
            rows.append([label, a["variant"], 100 * a["base_mean"], a["gain_mean"], a["gain_std"],
                         sig["p_holm"], int(sig["significant"])])
            print(f"{label:>16} {a['variant']:>8}  base {100 * a['base_mean']:6.2f}  "
                  f"gain {a['gain_mean']:+6.2f} +- {a['gain_std']:.2f}{'*' if sig['significant'] else ''}")
    write_csv(args.out / "table.csv", ["stream", "variant", "base_pct", "gain_pp", "gain_std", "p_holm", "significant"], rows)
    write_json(args.out / "summary.json", summary)


if __name__ == "__main__":
    main()
