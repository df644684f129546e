"""Gain versus base accuracy on S2 (alpha 0.7), with the fitted break-even accuracy.

    python scripts/break_even.py --confusion-per-error 5
"""
from oatta.evaluation import PredictorSetup, SweepConfig, sweep
from oatta.streams import StreamSpec

from _common import base_parser, write_csv, write_json


def main():
    ap = base_parser(__doc__.splitlines()[0], "break_even")
    ap.add_argument("--confusion-per-error", type=float, default=5.0,
                    help="confuser logit boost per unit of error rate (0 disables systematic confusions)")
    ap.add_argument("--noise", type=float, default=1.0)
    args = ap.parse_args()
    grid = tuple(round(0.2 + 0.1 * i, 2) for i in range(8))
    setup = PredictorSetup(noise_scale=args.noise, confusion_per_error=args.confusion_per_error)
    res = sweep(SweepConfig(StreamSpec("s2", 10, args.length, alpha=0.7), "base_accuracy", grid,
                            tuple(range(args.seeds)), (setup,)))
    rows = [[a["grid_value"], a["variant"], a["base_mean"], a["gain_mean"], a["gain_std"]] for a in res.aggregates]
    write_csv(args.out / "points.csv", ["target_accuracy", "variant", "base_accuracy", "gain_pp", "gain_std"], rows)
    write_json(args.out / "summary.json", res.summary())
    for r in rows:
        print(f"target {r[0]:.2f} {r[1]:>8}: base {100 * r[2]:6.2f}%  gain {r[3]:+6.2f}pp")
    for v, fit in res.regression.items():
        print(f"{v}: slope {fit['slope']:.2f} pp/unit, r {fit['pearson_r']:.3f}, break-even {fit['x_at_zero']:.3f}")


if __name__ == "__main__":
    main()
