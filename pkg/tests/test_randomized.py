import math

import numpy as np
import pytest

from convex_margins.ensemble import BoundParams, Dataset, Stump
from convex_margins.errors import ValidationError
from convex_margins.randomized import (
    CheckReport,
    bernstein_N,
    bernstein_ceiling,
    binomial_gate,
    check_bernstein_tails,
    check_cluster_variance,
    check_maurey_tail,
    cluster_sample,
    hoeffding_ceiling,
    maurey_N,
    maurey_sample,
    sigma_hat,
    sigma_hat_batch,
    wilson_interval,
)
from convex_margins.variance import cluster_variances, partition_decomposition

from conftest import random_conv_ensemble, two_group_fixture


def small_problem(rng, T=12, n=30):
    f = random_conv_ensemble(rng, T)
    data = Dataset(rng.random((n, 2)), rng.choice([-1, 1], n))
    return f, data


class TestHelpers:
    def test_maurey_N(self):
        assert maurey_N(0.5, 0.1, 100) == 231

    def test_hoeffding_ceiling(self):
        c = hoeffding_ceiling(231, 0.1, 0.5)
        assert c == pytest.approx(math.exp(-4.62), rel=1e-14)
        assert c == pytest.approx(0.0098528, abs=5e-8)
        assert hoeffding_ceiling(10, 0.1, 0.0) == 0.0

    def test_bernstein(self):
        N = bernstein_N(0.25, 0.1, 100)
        assert N == math.ceil(100 * math.log(100))
        assert bernstein_ceiling(N, 0.25, 0.1) <= 1 / 100 + 1e-15

    def test_wilson(self):
        lo, hi = wilson_interval(0, 100)
        assert lo == 0.0 and hi == pytest.approx(9 / 109, rel=1e-14)
        lo, hi = wilson_interval(50, 100)
        assert lo < 0.5 < hi and (lo + hi) / 2 == pytest.approx(0.5)

    def test_gate(self):
        assert binomial_gate(0.01, 0.01, 1000)
        assert binomial_gate(0.01 + 3 * math.sqrt(0.0099 / 1000) - 1e-12, 0.01, 1000)
        assert not binomial_gate(0.02, 0.01, 10 ** 5)

    def test_report_dict(self):
        r = CheckReport("x", True, {"a": 1}, {"v": np.array([1.0, 2.0])})
        assert r.to_dict() == {"check": "x", "passed": True, "quantities": {"a": 1}, "per_row": {"v": [1.0, 2.0]}}


class TestMaureySample:
    def test_head_exact_when_no_tail(self, rng):
        f, data = small_problem(rng)
        s = maurey_sample(f, f.T, 5, seed=0)
        assert s.flagged
        np.testing.assert_allclose(s.evaluate(data.features), f.decision_function(data.features), atol=1e-15)

    def test_seeded(self, rng):
        f, _ = small_problem(rng)
        a, b = maurey_sample(f, 2, 50, seed=9), maurey_sample(f, 2, 50, seed=9)
        np.testing.assert_array_equal(a.draws, b.draws)
        assert np.all(a.draws >= 2)

    def test_unbiased_average(self, rng):
        f, data = small_problem(rng)
        X = data.features[:5]
        g = np.mean([maurey_sample(f, 3, 20, seed=s).evaluate(X) for s in range(3000)], axis=0)
        # Per-draw standard deviation is at most gamma_d <= 1; 60000 draws in total.
        np.testing.assert_allclose(g, f.decision_function(X), atol=5 / math.sqrt(60000))

    def test_errors(self, rng):
        f, _ = small_problem(rng)
        with pytest.raises(ValidationError):
            maurey_sample(f, f.T + 1, 5, seed=0)
        with pytest.raises(ValidationError):
            maurey_sample(f, 0, 0, seed=0)


class TestMaureyCheck:
    def test_passes_and_deterministic(self, rng):
        f, data = small_problem(rng)
        p = BoundParams(n=100)
        a = check_maurey_tail(f, data, 0.1, 2, p, M=3000, seed=1, rows=range(10))
        b = check_maurey_tail(f, data, 0.1, 2, p, M=3000, seed=1, rows=range(10))
        assert a.passed
        assert a.to_dict() == b.to_dict()
        assert a.quantities["N"] == maurey_N(a.quantities["gamma_d"], 0.1, 100)

    def test_no_tail(self, rng):
        f, data = small_problem(rng)
        r = check_maurey_tail(f, data, 0.1, f.T, BoundParams(n=100), M=10, seed=0)
        assert r.passed and r.quantities["max_two_sided"] == 0.0


class TestClusterSampler:
    def test_evaluate_is_replicate_mean(self, rng):
        f, data = small_problem(rng)
        c = partition_decomposition(f, np.arange(f.T) % 3)
        s = cluster_sample(c, 40, seed=2)
        np.testing.assert_allclose(s.evaluate(data.features), s.replicate_values(data.features).mean(axis=0),
                                   atol=1e-14)

    def test_zero_variance_clusters(self):
        data, f, _, _ = two_group_fixture()
        c = partition_decomposition(f, [0 if h.polarity > 0 else 1 for h in f.stumps])
        s = cluster_sample(c, 10, seed=0)
        np.testing.assert_allclose(s.evaluate(data.features), f.decision_function(data.features), atol=1e-15)
        assert sigma_hat(c, data.features[:1], 20, seed=0) == 0.0

    def test_variance_check(self, rng):
        f, data = small_problem(rng)
        c = partition_decomposition(f, np.arange(f.T) % 2)
        r = check_cluster_variance(c, f, data, M=5000, seed=4)
        assert r.passed
        np.testing.assert_array_equal(r.per_row["analytic"], cluster_variances(c, data.features))

    def test_variance_check_needs_M(self, rng):
        f, data = small_problem(rng)
        c = partition_decomposition(f, np.zeros(f.T, dtype=int))
        with pytest.raises(ValidationError):
            check_cluster_variance(c, f, data, M=10, seed=0)

    def test_sigma_hat_unbiased(self, rng):
        f, data = small_problem(rng)
        c = partition_decomposition(f, np.arange(f.T) % 2)
        X = data.features[:4]
        vals = sigma_hat_batch(c, X, N=5, M=4000, seed=6)
        assert vals.shape == (4000, 4)
        se = vals.std(axis=0, ddof=1) / math.sqrt(4000)
        assert np.all(np.abs(vals.mean(axis=0) - cluster_variances(c, X)) <= 4 * se)


class TestBernsteinCheck:
    def test_runs_and_reports(self, rng):
        f, data = small_problem(rng, T=10, n=20)
        c = partition_decomposition(f, np.arange(f.T) % 3)
        p = BoundParams(n=50)
        r = check_bernstein_tails(c, data, gamma=0.25, delta=0.25, params=p, M=500, seed=0, M_step4=200)
        q = r.quantities
        assert q["N_step2"] == bernstein_N(0.25, 0.25, 50)
        assert q["N_step4"] == math.ceil(16 / 0.25 * math.log(50))
        assert q["K_min"] >= 0.0
        assert r.passed

    def test_delta_above_gamma(self, rng):
        f, data = small_problem(rng)
        c = partition_decomposition(f, np.zeros(f.T, dtype=int))
        with pytest.raises(ValidationError):
            check_bernstein_tails(c, data, 0.1, 0.2, BoundParams(n=50), M=10, seed=0)
