import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cramer_metrics.distributions import (
    BERNOULLI_MAX,
    DiscreteDist,
    PointCloud,
    bernoulli,
    bernoulli_dist,
    cdf,
    convolve,
    dirac,
    empirical,
    family_dist,
    family_from_dict,
    family_grad_cdf,
    from_atoms,
    make_rng,
    quantile,
    sample,
    scale,
    softmax_categorical,
    three_point_toy,
)

from conftest import discrete_dists


class TestDiscreteDist:
    def test_valid(self):
        d = DiscreteDist([0, 1, 10], [0.5, 0.25, 0.25])
        assert d.support.tolist() == [0.0, 1.0, 10.0]
        assert d.mean() == pytest.approx(2.75)
        assert d.cumulative[-1] == 1.0

    @pytest.mark.parametrize("support, probs", [
        ([0, 1], [0.5, 0.6]),
        ([1, 0], [0.5, 0.5]),
        ([0, 0], [0.5, 0.5]),
        ([0, 1], [-0.1, 1.1]),
        ([0, 1], [1.0]),
        ([], []),
        ([0, math.nan], [0.5, 0.5]),
    ])
    def test_invalid(self, support, probs):
        with pytest.raises(ValueError):
            DiscreteDist(support, probs)

    def test_sum_tolerance(self):
        DiscreteDist([0, 1], [0.5, 0.5 + 5e-13])
        with pytest.raises(ValueError):
            DiscreteDist([0, 1], [0.5, 0.5 + 1e-11])

    def test_immutable(self):
        d = DiscreteDist([0, 1], [0.5, 0.5])
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_json_round_trip(self):
        d = DiscreteDist([-1.5, 2.0], [0.3, 0.7])
        assert DiscreteDist.from_json(d.to_json()) == d
        assert d.to_dict() == {"support": [-1.5, 2.0], "probs": [0.3, 0.7]}

    def test_from_dict_missing_key(self):
        with pytest.raises(ValueError):
            DiscreteDist.from_dict({"support": [0]})

    def test_prob_of(self):
        d = DiscreteDist([0, 1], [0.25, 0.75])
        assert d.prob_of(1.0) == 0.75
        assert d.prob_of(0.5) == 0.0


class TestCdf:
    def test_dirac(self):
        assert cdf(dirac(0.0), -1.0) == 0.0
        assert cdf(dirac(0.0), 0.0) == 1.0

    def test_bernoulli(self):
        assert cdf(bernoulli_dist(0.25), 0.5) == 0.75

    def test_vectorised(self):
        d = DiscreteDist([0, 1, 10], [0.5, 0.25, 0.25])
        np.testing.assert_array_equal(cdf(d, [-1, 0, 0.5, 1, 9.9, 10, 11]),
                                      [0, 0.5, 0.5, 0.75, 0.75, 1, 1])

    @given(discrete_dists(), st.lists(st.floats(-10, 10), min_size=2, max_size=20))
    def test_monotone_and_limits(self, d, xs):
        xs = np.sort(xs)
        F = cdf(d, xs)
        assert np.all(np.diff(F) >= 0)
        assert cdf(d, d.support[0] - 1e-9) == 0.0
        assert cdf(d, d.support[-1]) == 1.0


class TestQuantile:
    def test_examples(self):
        assert quantile(dirac(0.0), 1.0) == 0.0
        b = bernoulli_dist(0.25)
        assert quantile(b, 0.75) == 0.0
        assert quantile(b, 0.76) == 1.0

    @pytest.mark.parametrize("u", [0.0, -0.1, 1.0000001, math.nan])
    def test_domain(self, u):
        with pytest.raises(ValueError):
            quantile(bernoulli_dist(0.5), u)

    @given(discrete_dists(), st.floats(1e-9, 1.0))
    def test_galois_connection(self, d, u):
        x = quantile(d, u)
        assert x in d.support
        assert cdf(d, x) >= u
        for s in d.support:
            assert quantile(d, cdf(d, s)) <= s


class TestSampling:
    def test_dirac(self):
        np.testing.assert_array_equal(sample(dirac(5.0), make_rng(3), 3), [5, 5, 5])

    def test_reproducible(self):
        d = bernoulli_dist(0.5)
        a = sample(d, make_rng(42), 1000)
        b = sample(d, make_rng(42), 1000)
        assert a.tobytes() == b.tobytes()

    def test_law_of_large_numbers(self):
        x = sample(bernoulli_dist(0.5), make_rng(0), 100_000)
        assert abs(x.mean() - 0.5) < 0.01

    def test_clamped_bernoulli_all_ones(self):
        f = bernoulli(1.0)
        assert f.theta[0] == BERNOULLI_MAX
        # all ten draws are ones with probability (1 - 1e-6)^10
        assert (1 - 1e-6) ** 10 == pytest.approx(1 - 1e-5, abs=1e-10)
        ones = sum(np.all(sample(f.dist(), make_rng(s), 10) == 1.0) for s in range(200))
        assert ones == 200

    def test_bad_count(self):
        with pytest.raises(ValueError):
            sample(dirac(0.0), make_rng(0), 0)


class TestEmpirical:
    def test_examples(self):
        e = empirical([0, 1, 1, 10])
        assert e.support.tolist() == [0, 1, 10]
        assert e.probs.tolist() == [0.25, 0.5, 0.25]
        assert empirical([7]) == dirac(7.0)
        assert empirical([3, 3, 3]) == dirac(3.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical([])

    def test_expected_cdf_by_enumeration(self):
        P = DiscreteDist([0, 1, 10], [0.5, 0.2, 0.3])
        xs = np.array([-1, 0, 0.5, 1, 5, 10])
        for m in (1, 2, 3):
            acc = np.zeros(xs.size)
            for tup in product(range(3), repeat=m):
                w = math.prod(P.probs[i] for i in tup)
                acc += w * cdf(empirical(P.support[list(tup)]), xs)
            np.testing.assert_allclose(acc, cdf(P, xs), rtol=0, atol=1e-12)


class TestTransforms:
    def test_scale_and_convolve(self):
        d = DiscreteDist([0, 1], [0.5, 0.5])
        assert scale(d, 2.0).support.tolist() == [0, 2]
        c = convolve(d, d)
        assert c.support.tolist() == [0, 1, 2]
        np.testing.assert_allclose(c.probs, [0.25, 0.5, 0.25])

    def test_from_atoms_merges(self):
        d = from_atoms([2, 1, 2], [0.25, 0.5, 0.25])
        assert d.support.tolist() == [1, 2]
        assert d.probs.tolist() == [0.5, 0.5]


class TestPointCloud:
    def test_defaults(self):
        c = PointCloud([[0, 0], [1, 1]])
        assert c.dim == 2
        np.testing.assert_array_equal(c.weights, [0.5, 0.5])
        np.testing.assert_array_equal(c.mean(), [0.5, 0.5])

    def test_promotes_1d(self):
        assert PointCloud([1.0, 2.0, 3.0]).dim == 1

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            PointCloud([[0.0], [1.0]], [0.2, 0.2])


class TestFamilies:
    def test_three_point_uniform(self):
        np.testing.assert_allclose(family_dist(three_point_toy(0.0)).probs, [1 / 3] * 3, atol=1e-15)

    def test_bernoulli(self):
        d = family_dist(bernoulli(0.6))
        assert d.support.tolist() == [0, 1]
        np.testing.assert_allclose(d.probs, [0.4, 0.6], atol=1e-15)

    def test_three_point_limit(self):
        np.testing.assert_allclose(three_point_toy(-30.0).probs, [1, 0, 0], atol=1e-12)

    def test_three_point_formula(self):
        for t in (-3.0, -0.5, 0.0, 1.2, 4.0):
            e = math.exp(t)
            np.testing.assert_allclose(three_point_toy(t).probs,
                                       [1 / (1 + 2 * e), e / (1 + 2 * e), e / (1 + 2 * e)],
                                       rtol=1e-14)

    def test_softmax_stable(self):
        f = softmax_categorical([1000.0, 1000.0, 0.0], [0, 1, 2])
        np.testing.assert_allclose(f.probs, [0.5, 0.5, 0.0], atol=1e-15)

    def test_bernoulli_clamp(self):
        assert bernoulli(0.0).theta[0] == 1e-6
        assert bernoulli(2.0).theta[0] == 1 - 1e-6

    def test_grad_cdf_examples(self):
        assert family_grad_cdf(bernoulli(0.3), 0.5)[0] == -1.0
        assert family_grad_cdf(bernoulli(0.3), 2.0)[0] == 0.0
        assert family_grad_cdf(three_point_toy(0.0), 0.5)[0] == pytest.approx(-2 / 9, rel=1e-14)

    @settings(max_examples=50)
    @given(st.floats(-4, 4), st.floats(-1, 11))
    def test_grad_cdf_finite_diff_three_point(self, theta, x):
        h = 1e-5
        fd = (cdf(three_point_toy(theta + h).dist(), x)
              - cdf(three_point_toy(theta - h).dist(), x)) / (2 * h)
        g = family_grad_cdf(three_point_toy(theta), x)[0]
        assert g == pytest.approx(fd, rel=1e-6, abs=1e-10)

    def test_grad_cdf_finite_diff_softmax(self):
        rng = make_rng(1)
        support = [-1.0, 0.0, 2.0, 3.5]
        for _ in range(20):
            theta = rng.normal(size=4)
            x = rng.uniform(-2, 4)
            f = softmax_categorical(theta, support)
            g = f.grad_cdf(x)
            for i in range(4):
                e = np.eye(4)[i] * 1e-5
                fd = (cdf(f.with_theta(theta + e).dist(), x)
                      - cdf(f.with_theta(theta - e).dist(), x)) / 2e-5
                assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)

    def test_from_dict(self):
        f = family_from_dict({"kind": "softmax", "theta": [0, 0], "support": [1, 2]})
        np.testing.assert_allclose(f.probs, [0.5, 0.5])
        assert family_from_dict({"kind": "bernoulli", "theta": 0.2}).probs[1] == pytest.approx(0.2)

    @pytest.mark.parametrize("kind, theta, support", [
        ("bernoulli", [0.1, 0.2], [0, 1]),
        ("three_point", [0.0], [0, 1, 2]),
        ("softmax", [0.0], [0, 1]),
        ("gaussian", [0.0], [0]),
    ])
    def test_invalid_family(self, kind, theta, support):
        from cramer_metrics.distributions import ParametricFamily
        with pytest.raises(ValueError):
            ParametricFamily(kind, theta, support)
