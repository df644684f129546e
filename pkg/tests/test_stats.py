import math

import numpy as np
import pytest
from scipy import stats as sps

from oatta.stats import holm_adjust, linear_fit, wilcoxon_signed_rank

import oracles


class TestWilcoxon:
    def test_all_positive_ten(self):
        r = wilcoxon_signed_rank(np.arange(1, 11) * 0.1)
        assert r.pvalue == 2 / 1024 and r.method == "exact" and r.statistic == 55.0

    def test_balanced_pair(self):
        assert wilcoxon_signed_rank([1.0, -1.0]).pvalue == 1.0

    def test_textbook_sample(self):
        # ten paired differences with one tied magnitude pair
        d = [1.83 - 0.878, 0.50 - 0.647, 1.62 - 0.598, 2.48 - 2.05, 1.68 - 1.06,
             1.88 - 1.29, 1.55 - 1.06, 3.06 - 3.14, 1.30 - 1.29, 2.0 - 2.4]
        assert wilcoxon_signed_rank(d).pvalue == oracles.wilcoxon_enumerate(d)

    def test_zeros_dropped(self):
        r = wilcoxon_signed_rank([0.0, 0.0, 1.0, 2.0, 3.0])
        assert r.n_effective == 3 and r.pvalue == 2 / 8

    def test_all_zero_flagged(self):
        r = wilcoxon_signed_rank([0.0, 0.0])
        assert r.pvalue == 1.0 and r.all_zero

    def test_matches_enumeration(self, rng):
        for i in range(200):
            n = int(rng.integers(1, 13))
            d = rng.integers(-3, 4, size=n) if i % 2 else rng.normal(size=n)
            assert wilcoxon_signed_rank(d).pvalue == oracles.wilcoxon_enumerate(np.asarray(d, float).tolist())

    def test_matches_scipy_without_ties(self, rng):
        for _ in range(50):
            d = rng.normal(size=int(rng.integers(5, 20)))
            assert wilcoxon_signed_rank(d).pvalue == pytest.approx(sps.wilcoxon(d, method="exact").pvalue, rel=1e-12)

    def test_normal_path_against_scipy(self, rng):
        d = rng.normal(0.3, 1.0, size=40)
        r = wilcoxon_signed_rank(d)
        assert r.method == "normal"
        ref = sps.wilcoxon(d, method="approx", correction=True).pvalue
        assert r.pvalue == pytest.approx(ref, rel=1e-9)

    def test_pratt_keeps_zero_ranks(self):
        d = [0.0, 1.0, 2.0, -3.0]
        assert wilcoxon_signed_rank(d, zero_method="pratt").statistic == 2 + 3
        assert wilcoxon_signed_rank(d).statistic == 1 + 2

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            wilcoxon_signed_rank([])


class TestHolm:
    def test_hand_example(self):
        np.testing.assert_allclose(holm_adjust([0.005, 0.01, 0.03, 0.04, 0.20]),
                                   [0.025, 0.04, 0.09, 0.09, 0.20], atol=1e-12, rtol=0)

    def test_single(self):
        assert holm_adjust([0.013]).tolist() == [0.013]

    def test_all_ones(self):
        assert holm_adjust([1.0] * 4).tolist() == [1.0] * 4

    def test_input_order_kept(self):
        np.testing.assert_allclose(holm_adjust([0.04, 0.005, 0.20, 0.01, 0.03]), [0.09, 0.025, 0.20, 0.04, 0.09])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            holm_adjust([0.5, 1.2])


class TestLinearFit:
    def test_exact_line(self):
        f = linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
        assert f.slope == pytest.approx(2) and f.intercept == pytest.approx(1)
        assert f.pearson_r == pytest.approx(1) and f.x_at_zero == pytest.approx(-0.5)

    def test_constant_y(self):
        f = linear_fit([0, 1, 2], [4, 4, 4])
        assert f.slope == 0 and f.pearson_r == 0 and f.degenerate

    def test_against_normal_equations(self, rng):
        x = rng.uniform(0, 1, 5)
        y = 3 * x - 1 + rng.normal(0, 0.1, 5)
        f = linear_fit(x, y)
        slope, intercept = oracles.ols(x.tolist(), y.tolist())
        assert f.slope == pytest.approx(slope, abs=1e-10)
        assert f.intercept == pytest.approx(intercept, abs=1e-10)
        assert f.pearson_r == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)

    @pytest.mark.parametrize("x,y", [([1, 1, 1], [1, 2, 3]), ([1, 2], [1, 2])])
    def test_errors(self, x, y):
        with pytest.raises(ValueError):
            linear_fit(x, y)
