"""Acceptance suite: one PASS/FAIL line per criterion (see the summary section of the pytest output).

Experiment-scale criteria use the calibrated operating point from
:data:`oatta.evaluation.OPERATING_POINT` (77% top-1 accuracy, K = 10).
"""
import dataclasses
import json
import time

import numpy as np
import pytest

from oatta import cli
from oatta.evaluation import (
    OPERATING_POINT, PredictorSetup, SweepConfig, ema_fixed_point, run_variants, simulate_seed,
    structural_gain, sweep,
)
from oatta.filter import FilterConfig, FilterState, advance, filter_step, filter_trace, init_filter
from oatta.predictor import PredictorSpec, emit_stream
from oatta.stats import holm_adjust, wilcoxon_signed_rank
from oatta.streams import StreamSpec, imbalanced_source_matrices, sample_stream, sticky_matrix

import oracles

K10 = 10
T = 10_000
SEEDS = tuple(range(10))


def _random_state(rng, K, uniform_prior=False):
    C = rng.gamma(0.5, size=(K, K)) + 1e-3
    A = C / C.sum(axis=1, keepdims=True)
    cfg = FilterConfig(
        K, class_prior="uniform" if uniform_prior else tuple(rng.dirichlet(np.ones(K))),
        forgetting_rate=float(rng.uniform(0.01, 0.5)), entropy_temperature=float(rng.uniform(0.2, 3.0)),
    )
    st = FilterState(cfg, C, A, rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(K)), t=int(rng.integers(1, 100)))
    return st


def test_criterion_01_filter_matches_scalar_oracle(verdict):
    rng = np.random.default_rng(1)
    filter_step(init_filter(FilterConfig(3)), np.ones(3) / 3)  # compile outside the clock
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        K = int(rng.integers(2, 11))
        st = _random_state(rng, K)
        q = rng.dirichlet(np.full(K, 0.5))
        new, out = filter_step(st, q)
        c = st.config
        prior, post, w, C2, A2 = oracles.filter_step(
            st.counts.tolist(), st.dynamics.tolist(), st.p_prev.tolist(), st.q_prev.tolist(), q.tolist(),
            c.rho.tolist(), c.forgetting_rate, c.entropy_temperature, c.epsilon,
        )
        for got, want in ((out.prior, prior), (out.posterior, post), (new.counts, C2), (new.dynamics, A2)):
            worst = max(worst, float(np.max(np.abs(np.asarray(got) - np.asarray(want)))))
        worst = max(worst, abs(out.weight - w))
    elapsed = time.perf_counter() - t0
    ok = verdict(1, worst <= 1e-12 and elapsed < 5.0, f"max abs diff {worst:.2e} (tol 1e-12), {elapsed:.2f}s (< 5s)")
    assert ok


def test_criterion_02_limiting_cases(verdict):
    rng = np.random.default_rng(2)
    worst_a = worst_b = 0.0
    for _ in range(100):
        K = int(rng.integers(2, 11))
        # q / rho is flat only under the default uniform class prior
        st = _random_state(rng, K, uniform_prior=True)
        _, out = filter_step(st, np.full(K, 1.0 / K))
        worst_a = max(worst_a, float(np.max(np.abs(out.posterior - out.prior))))

        cfg = FilterConfig(K)
        st = FilterState(cfg, np.ones((K, K)), np.full((K, K), 1.0 / K), rng.dirichlet(np.ones(K)),
                         rng.dirichlet(np.ones(K)), t=5)
        q = rng.dirichlet(np.ones(K))
        _, out = filter_step(st, q)
        worst_b = max(worst_b, float(np.max(np.abs(out.posterior - q))))
    ok = verdict(2, worst_a <= 1e-12 and worst_b <= 1e-12,
                 f"uniform q: |p-pi| {worst_a:.1e}; uniform pi and rho: |p-q| {worst_b:.1e} (tol 1e-12)")
    assert ok


def test_criterion_03_posterior_never_reaches_counts(verdict):
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(100):
        K = int(rng.integers(2, 11))
        Q = rng.dirichlet(np.full(K, 0.3), size=500)
        a = init_filter(FilterConfig(K))
        b = init_filter(FilterConfig(K))
        for q in Q:
            b.p_prev = rng.dirichlet(np.ones(K))  # arbitrary carried posterior
            advance(a, q[None, :])
            advance(b, q[None, :])
            if not (np.array_equal(a.counts, b.counts) and np.array_equal(a.dynamics, b.dynamics)):
                mismatches += 1
    ok = verdict(3, mismatches == 0, f"{mismatches} of 50000 steps differ in C or A under posterior perturbation")
    assert ok


def _per_step_seconds(K, block=200, reps=31):
    rng = np.random.default_rng(K)
    Q = rng.dirichlet(np.ones(K), size=block)
    st = init_filter(FilterConfig(K))
    advance(st, Q)
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        advance(st, Q)
        ts.append((time.perf_counter() - t0) / block)
    return float(np.median(ts))


def test_criterion_04_quadratic_cost_and_flat_in_time(verdict):
    ratio = _per_step_seconds(100) / _per_step_seconds(10)

    K, total, block = 10, 50_000, 500
    Q = np.random.default_rng(4).dirichlet(np.ones(K), size=total)
    advance(init_filter(FilterConfig(K)), Q[:block])
    st = init_filter(FilterConfig(K))
    times = []
    for i in range(0, total, block):
        t0 = time.perf_counter()
        advance(st, Q[i:i + block])
        times.append(time.perf_counter() - t0)
    n = len(times) // 10
    drift = float(np.mean(times[-n:]) / np.mean(times[:n]))
    ok = verdict(4, 20 <= ratio <= 500 and drift <= 1.5,
                 f"K=100/K=10 per-step ratio {ratio:.1f} (band 20-500); last/first decile {drift:.2f} (<= 1.5)")
    assert ok


@pytest.fixture(scope="module")
def operating_spec():
    return OPERATING_POINT.resolve(K10)


def _gains(stream, pspec, seeds=SEEDS):
    ung, gat, base = [], [], []
    for seed in seeds:
        labels, Q = simulate_seed(stream, pspec, seed)
        acc = run_variants(labels, Q, FilterConfig(stream.num_classes)).accuracies()
        base.append(acc["base"])
        ung.append(100 * (acc["ungated"] - acc["base"]))
        gat.append(100 * (acc["gated"] - acc["base"]))
    return np.array(base), np.array(ung), np.array(gat)


def test_criterion_05_gate_is_safe_on_random_streams(verdict, operating_spec):
    t0 = time.perf_counter()
    base, ung, gat = _gains(StreamSpec("s1", K10, T), operating_spec)
    elapsed = time.perf_counter() - t0
    acc = base.mean()
    ok = verdict(5, abs(acc - 0.77) <= 0.005 and abs(gat.mean()) <= 0.5 and ung.mean() < gat.mean() and elapsed < 60,
                 f"base acc {100 * acc:.2f}% (77 +- 0.5), gated {gat.mean():+.2f}pp (|.| <= 0.5), "
                 f"ungated {ung.mean():+.2f}pp (< gated), {elapsed:.1f}s")
    assert ok


ALPHAS = (0.1, 0.3, 0.5, 0.7, 0.85, 0.9, 0.95, 0.98)


@pytest.fixture(scope="module")
def alpha_sweep():
    return sweep(SweepConfig(StreamSpec("s2", K10, T), "alpha", ALPHAS, SEEDS))


def test_criterion_06_gain_grows_with_stickiness(verdict, alpha_sweep):
    res = alpha_sweep
    ung = {a: res.gains_for(a, "ungated").mean() for a in ALPHAS}
    rho = oracles.spearman(list(ALPHAS), [ung[a] for a in ALPHAS])
    gated_ok = []
    for a in ALPHAS:
        if a >= 0.5:
            s = res.significance_for(a, "gated")
            gated_ok.append(res.gains_for(a, "gated").mean() > 0 and s["significant"])
    ok = verdict(6, rho >= 0.9 and ung[0.7] >= 1 and ung[0.98] >= 5 and all(gated_ok),
                 f"spearman {rho:.3f} (>= 0.9), ungated @0.7 {ung[0.7]:+.2f}pp (>= 1), @0.98 {ung[0.98]:+.2f}pp (>= 5), "
                 f"gated positive+significant at {sum(gated_ok)}/{len(gated_ok)} alphas >= 0.5")
    assert ok


def test_criterion_07_permuted_stream(verdict, alpha_sweep):
    res = sweep(SweepConfig(StreamSpec("s3", K10, T, alpha=0.7), None, (None,), SEEDS))
    s3 = res.gains_for(None, "gated")
    sig = res.significance_for(None, "gated")
    s2 = alpha_sweep.gains_for(0.7, "gated")
    ok = verdict(7, s3.mean() > 0 and sig["significant"] and s3.mean() <= s2.mean(),
                 f"S3 gated {s3.mean():+.2f}pp (Holm p {sig['p_holm']:.4f}), S2 gated {s2.mean():+.2f}pp (S3 <= S2)")
    assert ok


def test_criterion_08_regime_switch_plasticity(verdict):
    pspec = PredictorSpec(K10, signal_strength=8.0, noise_scale=1.0)
    spec = StreamSpec("s4", K10, 2000, alpha=0.7, alpha2=0.5)
    cfg = FilterConfig(K10)
    first, second = [], []
    for seed in SEEDS:
        labels, Q = simulate_seed(spec, pspec, seed)
        g = filter_trace(cfg, Q).structural_gain
        first.append(g[800:1000].mean())
        second.append(g[1800:2000].mean())
    g1, g2 = float(np.mean(first)), float(np.mean(second))
    # deterministic fixed points of the count recursion under each regime, from long stationary runs
    fp = []
    for alpha in (0.7, 0.5):
        labels, Q = simulate_seed(StreamSpec("s2", K10, 100_000, alpha=alpha), pspec, 99)
        fp.append(structural_gain(ema_fixed_point(labels, Q, cfg)))
    ok = verdict(8, g1 - g2 >= 0.02 and abs(g1 - fp[0]) <= 0.1 and abs(g2 - fp[1]) <= 0.1,
                 f"G first half {g1:.3f}, second half {g2:.3f} (drop {g1 - g2:.3f} >= 0.02); fixed points "
                 f"{fp[0]:.3f}/{fp[1]:.3f}, deviations {abs(g1 - fp[0]):.3f}/{abs(g2 - fp[1]):.3f} (<= 0.1)")
    assert ok


def test_criterion_09_break_even_regression(verdict):
    grid = tuple(round(0.2 + 0.1 * i, 2) for i in range(8))
    t0 = time.perf_counter()
    res = sweep(SweepConfig(StreamSpec("s2", K10, T, alpha=0.7), "base_accuracy", grid, SEEDS))
    elapsed = time.perf_counter() - t0
    fit = res.regression["ungated"]
    ok = verdict(9, fit["pearson_r"] >= 0.6 and fit["slope"] > 0 and 0.35 <= fit["x_at_zero"] <= 0.60 and elapsed < 300,
                 f"r {fit['pearson_r']:.3f} (>= 0.6), slope {fit['slope']:.2f}, break-even {fit['x_at_zero']:.3f} "
                 f"(0.35-0.60), {elapsed:.0f}s")
    assert ok


def test_criterion_10_class_prior_choice(verdict):
    p_src = np.array([1.0] * 5 + [0.1] * 5)
    p_src /= p_src.sum()
    setup = PredictorSetup(class_bias=tuple(np.log(p_src)))
    pspec = setup.resolve(K10)
    shift = StreamSpec("s2", K10, T, alpha=0.7)
    no_shift = StreamSpec("explicit_matrix", K10, T, matrix=tuple(map(tuple, imbalanced_source_matrices()[0])),
                          initial_distribution=tuple(p_src))
    res = {}
    for name, spec in (("shift", shift), ("no_shift", no_shift)):
        acc = {"base": [], "uniform": [], "p_src": []}
        for seed in SEEDS:
            labels, Q = simulate_seed(spec, pspec, seed)
            acc["base"].append(np.mean(Q.argmax(1) == labels))
            for prior, key in (("uniform", "uniform"), (tuple(p_src), "p_src")):
                tr = filter_trace(FilterConfig(K10, class_prior=prior), Q)
                acc[key].append(np.mean(tr.predicted == labels))
        res[name] = {k: 100 * float(np.mean(v)) for k, v in acc.items()}
    s, n = res["shift"], res["no_shift"]
    ok = verdict(10, s["p_src"] > s["uniform"] and n["uniform"] > n["p_src"]
                 and s["uniform"] > s["base"] and s["p_src"] > s["base"],
                 f"shift: base {s['base']:.1f} / rho=uniform {s['uniform']:.1f} / rho=P_src {s['p_src']:.1f}; "
                 f"no shift: base {n['base']:.1f} / uniform {n['uniform']:.1f} / P_src {n['p_src']:.1f}")
    assert ok


def test_criterion_11_statistics(verdict):
    rng = np.random.default_rng(11)
    mismatches = 0
    for i in range(200):
        n = int(rng.integers(1, 13))
        d = rng.integers(-4, 5, size=n).astype(float) if i % 2 else rng.normal(size=n)
        if np.all(d == 0):
            d[0] = 1.0
        if wilcoxon_signed_rank(d).pvalue != oracles.wilcoxon_enumerate(d.tolist()):
            mismatches += 1
    holm = holm_adjust([0.005, 0.01, 0.03, 0.04, 0.20])
    holm_err = float(np.max(np.abs(holm - np.array([0.025, 0.04, 0.09, 0.09, 0.20]))))
    p10 = wilcoxon_signed_rank(np.arange(1, 11)).pvalue
    ok = verdict(11, mismatches == 0 and holm_err <= 1e-12 and p10 == 2 / 1024,
                 f"{mismatches}/200 enumeration mismatches, Holm error {holm_err:.1e}, all-positive n=10 p = {p10!r}")
    assert ok


def test_criterion_12_transition_recovery(verdict):
    spec = StreamSpec("s2", K10, 5000, alpha=0.9)
    truth = sticky_matrix(K10, 0.9)
    dists = []
    for seed in SEEDS:
        labels = sample_stream(dataclasses.replace(spec, seed=seed)).labels
        st = init_filter(FilterConfig(K10))
        advance(st, np.eye(K10)[labels])
        dists.append(float(np.abs(st.dynamics - truth).sum(axis=1).max()))
    worst = max(dists)
    ok = verdict(12, worst <= 0.05, f"max row-wise L1 after 5000 steps: mean {np.mean(dists):.3f}, "
                                    f"worst {worst:.3f} over {len(SEEDS)} seeds (<= 0.05)")
    assert ok


def test_criterion_13_run_is_byte_deterministic(verdict, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"stream": {"kind": "s2", "length": 2000}, "seeds": [0, 1]}))
    outs = []
    for name in ("a", "b"):
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir()) if p.name != "manifest.json"})
    same = outs[0] == outs[1] and len(outs[0]) > 0
    ok = verdict(13, same, f"{len(outs[0])} data files compared, {'identical' if same else 'different'}")
    assert ok
