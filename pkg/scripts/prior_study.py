"""Class-prior sensitivity on an imbalanced source (five classes at 10% frequency).

The synthetic predictor carries ``beta * log P_src`` as a logit bias. With
``beta = 1`` the bias is exactly the Bayes prior shift, so dividing by
``rho = P_src`` recovers a clean likelihood; smaller ``beta`` models a network
that only partly absorbs the source imbalance.

    python scripts/prior_study.py --beta 1.0
    python scripts/prior_study.py --beta 0.5 --noise 2.3 --signal 5.4
"""
import numpy as np

from oatta.evaluation import PredictorSetup, simulate_seed
from oatta.filter import FilterConfig, filter_trace
from oatta.predictor import PredictorSpec
from oatta.streams import StreamSpec, imbalanced_source_matrices

from _common import base_parser, write_json


def main():
    ap = base_parser(__doc__.splitlines()[0], "prior_study")
    ap.add_argument("--beta", type=float, default=1.0, help="fraction of log P_src present in the logits")
    ap.add_argument("--noise", type=float, default=1.0)
    ap.add_argument("--signal", type=float, default=None, help="fixed logit boost; default calibrates to 77%%")
    args = ap.parse_args()
    K = 10
    p_src = np.array([1.0] * 5 + [0.1] * 5)
    p_src /= p_src.sum()
    bias = tuple(args.beta * np.log(p_src))
    if args.signal is None:
        pspec = PredictorSetup(noise_scale=args.noise, class_bias=bias).resolve(K)
    else:
        pspec = PredictorSpec(K, args.signal, args.noise, bias)
    streams = {
        "label_shift": StreamSpec("s2", K, args.length, alpha=0.7),
        "no_shift": StreamSpec("explicit_matrix", K, args.length, matrix=tuple(map(tuple, imbalanced_source_matrices()[0])),
                               initial_distribution=tuple(p_src)),
    }
    out = {"beta": args.beta, "signal_strength": pspec.signal_strength, "noise_scale": args.noise}
    for name, spec in streams.items():
        acc = {"base": [], "rho_uniform": [], "rho_p_src": []}
        for seed in range(args.seeds):
            labels, Q = simulate_seed(spec, pspec, seed)
            acc["base"].append(np.mean(Q.argmax(1) == labels))
            acc["rho_uniform"].append(np.mean(filter_trace(FilterConfig(K), Q).predicted == labels))
            acc["rho_p_src"].append(np.mean(filter_trace(FilterConfig(K, class_prior=tuple(p_src)), Q).predicted == labels))
        out[name] = {k: 100 * float(np.mean(v)) for k, v in acc.items()}
        print(f"{name:>12}: " + "  ".join(f"{k} {v:.1f}" for k, v in out[name].items()))
    write_json(args.out / f"summary_beta{args.beta}.json", out)


if __name__ == "__main__":
    main()
