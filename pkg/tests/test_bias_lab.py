import io
import math

import numpy as np
import pytest

from cramer_metrics._binomial import binom_pmf, median_interval
from cramer_metrics.bias_lab import (
    MINIMAX_FLOOR,
    BiasCurve,
    bias_row,
    consistency_sweep,
    deterministic_regime,
    deterministic_threshold,
    expected_sample_loss,
    half_point_bias,
    is_nonincreasing,
    loss_curve,
    minimax_bias,
)
from cramer_metrics.distributions import bernoulli, bernoulli_dist
from cramer_metrics.divergences import Divergence
from cramer_metrics.gradients import LossSpec, expected_sample_grad


def enumerated_gap(theta_star, theta, m):
    spec = LossSpec(Divergence.wasserstein_pp(1), bernoulli(0.5), bernoulli_dist(theta_star))
    rep = expected_sample_grad(spec, theta, m)
    return rep.true_grad[0] - rep.expected_sample_grad[0]


class TestBinomial:
    @pytest.mark.parametrize("m, p", [(5, 0.3), (64, 0.5), (65, 0.5), (1000, 0.3)])
    def test_pmf_sums(self, m, p):
        assert math.fsum(binom_pmf(m, p)) == pytest.approx(1.0, abs=1e-12)

    def test_pmf_exact(self):
        np.testing.assert_allclose(binom_pmf(3, 0.5), [1 / 8, 3 / 8, 3 / 8, 1 / 8], rtol=1e-15)

    def test_pmf_endpoints(self):
        assert binom_pmf(4, 0.0).tolist() == [1, 0, 0, 0, 0]
        assert binom_pmf(4, 1.0).tolist() == [0, 0, 0, 0, 1]

    def test_log_gamma_branch_matches_exact(self):
        a = binom_pmf(64, 0.37)
        from cramer_metrics._binomial import log_comb
        b = np.array([math.exp(math.lgamma(65) - math.lgamma(k + 1) - math.lgamma(65 - k)
                               + k * math.log(0.37) + (64 - k) * math.log(0.63)) for k in range(65)])
        np.testing.assert_allclose(a, b, rtol=1e-12)
        assert log_comb(70, 3) == pytest.approx(math.log(math.comb(70, 3)), rel=1e-14)

    def test_median_interval(self):
        assert median_interval(6, 0.6) == (4, 4)
        # Binomial(1, 1/2): every point of [0, 1] is a median
        assert median_interval(1, 0.5) == (0, 1)


class TestMinimax:
    def test_m1(self):
        w = minimax_bias(1)
        assert (w.theta_star, w.theta) == (0.5, 0.75)
        assert w.bias == 1.0
        assert enumerated_gap(0.5, 0.75, 1) == 1.0

    def test_m2(self):
        w = minimax_bias(2)
        assert w.bias == pytest.approx(0.5, abs=1e-15)
        assert enumerated_gap(0.5, 0.75, 2) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("m", range(2, 33))
    def test_closed_form_and_floor(self, m):
        w = minimax_bias(m)
        assert w.bias == pytest.approx(2 * (1 - 1 / m) ** m, abs=1e-12)
        assert w.bias >= MINIMAX_FLOOR

    def test_sequence_increases_to_two_over_e(self):
        gaps = [minimax_bias(m).bias for m in range(2, 65)]
        assert all(b > a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 2 / math.e
        assert 2 / math.e - gaps[-1] < 0.01

    def test_bad_m(self):
        with pytest.raises(ValueError):
            minimax_bias(0)


class TestHalfPoint:
    def test_m1(self):
        assert half_point_bias(1) == 1.0

    @pytest.mark.parametrize("m", [9, 100])
    def test_floor(self, m):
        theta = 0.5 + 1 / (2 * math.sqrt(8 * m))
        pmf = binom_pmf(m, 0.5)
        expected = 2 * math.fsum(pmf[k] for k in range(m + 1) if k / m >= theta)
        assert half_point_bias(m) == pytest.approx(expected, abs=1e-15)
        assert half_point_bias(m) >= 1 / 6


class TestLossCurve:
    def test_wrong_minimum(self):
        c = loss_curve(6, 0.6)
        assert c.sample_argmin == pytest.approx(2 / 3, abs=1e-4)
        assert c.true_argmin == pytest.approx(0.6, abs=1e-15)

    @pytest.mark.parametrize("m, theta_star", [(1, 0.6), (5, 0.9)])
    def test_deterministic_argmin(self, m, theta_star):
        assert loss_curve(m, theta_star).sample_argmin == 1.0

    def test_grid_contains_kinks(self):
        c = loss_curve(7, 0.35)
        for k in range(8):
            assert k / 7 in c.theta
        assert np.all(np.diff(c.theta) > 0)

    def test_convex_piecewise_linear(self):
        c = loss_curve(5, 0.42)
        # skip slivers where an injected kink sits next to a grid point
        keep = np.diff(c.theta) > 1e-6
        slopes = (np.diff(c.expected_sample_loss) / np.diff(c.theta))[keep]
        assert np.all(np.diff(slopes) >= -1e-8)
        kinks = np.unique(np.round(slopes, 6))
        assert kinks.size <= 5 + 1

    def test_argmin_in_median_interval(self):
        for m, theta_star in [(3, 0.5), (4, 0.3), (6, 0.6), (10, 0.71)]:
            c = loss_curve(m, theta_star)
            lo, hi = c.median
            assert lo - 1e-12 <= c.sample_argmin <= hi + 1e-12

    def test_expected_sample_loss_formula(self):
        m, ts = 4, 0.3
        theta = 0.55
        direct = sum(math.comb(m, k) * ts ** k * (1 - ts) ** (m - k) * abs(k / m - theta)
                     for k in range(m + 1))
        assert expected_sample_loss(m, ts, theta)[0] == pytest.approx(direct, abs=1e-15)

    def test_grid_step_bound(self):
        with pytest.raises(ValueError):
            loss_curve(3, 0.5, grid_step=0.01)

    def test_csv(self):
        buf = io.StringIO()
        loss_curve(2, 0.5, grid_step=1e-3).write_csv(buf)
        assert buf.getvalue().splitlines()[0] == "theta,true_loss,expected_sample_loss"


class TestDeterministic:
    def test_threshold(self):
        assert deterministic_threshold(5) == pytest.approx(0.87055, abs=1e-5)
        assert deterministic_threshold(1) == 0.5

    def test_m5(self):
        check = deterministic_regime(5, 0.9)
        assert check.max_expected_grad < 0
        assert check.max_expected_grad == pytest.approx(1 - 2 * 0.9 ** 5, abs=1e-12)
        assert 1 - 2 * 0.9 ** 5 == pytest.approx(-0.18098, abs=1e-5)
        assert check.sample_argmin == 1.0

    def test_m1(self):
        check = deterministic_regime(1, 0.6)
        assert check.max_expected_grad == pytest.approx(-0.2, abs=1e-15)

    def test_below_threshold(self):
        with pytest.raises(ValueError):
            deterministic_regime(5, 0.8)


class TestConsistency:
    def test_m1(self):
        row = consistency_sweep(0.3, 0.6, [1]).rows[0]
        assert abs(row.bias) == pytest.approx(0.6, abs=1e-15)

    def test_m1000(self):
        assert consistency_sweep(0.3, 0.6, [1000]).abs_bias()[0] < 0.01

    def test_monotone_powers_of_two(self):
        sweep = consistency_sweep(0.3, 0.6, [2 ** k for k in range(1, 11)])
        assert is_nonincreasing(list(sweep.abs_bias()))

    def test_tie_nudged(self):
        row = consistency_sweep(0.3, 0.5, [4]).rows[0]
        assert row.theta == 0.5 + 1e-9

    def test_invalid(self):
        with pytest.raises(ValueError):
            consistency_sweep(0.3, 0.3, [2])

    def test_bias_columns_consistent(self):
        for m in (1, 3, 8):
            for ts, t in [(0.2, 0.45), (0.7, 0.1), (0.5, 0.5)]:
                r = bias_row(m, ts, t)
                assert r.bias == pytest.approx(r.exp_sample_grad - r.true_grad, abs=1e-15)

    def test_csv_header(self):
        buf = io.StringIO()
        BiasCurve((bias_row(2, 0.3, 0.6),)).write_csv(buf)
        assert buf.getvalue().splitlines()[0] == "m,theta_star,theta,true_grad,exp_sample_grad,bias"
