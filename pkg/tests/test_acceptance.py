"""Acceptance criteria 1-12.

Each test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary (see conftest.py) and immediately when run with ``-s``.
"""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from convex_margins.cli import main as cli_main
from convex_margins.covering import (
    EntropyCurve,
    base_covering_profile,
    bound_theorem5,
    entropy_integral,
    exact_covering,
    fixed_point,
    greedy_covering,
    n_infty,
    squared_l2,
)
from convex_margins.ensemble import BoundParams, ConvexEnsemble, Dataset, Stump, normalize
from convex_margins.harness import fixture_slopes, fixture_weights, synth_data
from convex_margins.margins import MarginProfile, margin_cdf, margin_profile, min_margin
from convex_margins.randomized import (
    check_cluster_variance,
    check_maurey_tail,
    hoeffding_ceiling,
    maurey_N,
    sigma_hat_batch,
)
from convex_margins.sparsity import (
    bound_gamma_dim,
    classic_bound,
    effective_dimension,
    phi,
    solve_concave,
    solve_phi,
)
from convex_margins.trainers import adaboost, adaboost_trace, best_stump
from convex_margins.variance import (
    between_cluster_variances,
    bound_cluster,
    bound_variance,
    cluster_count,
    cluster_threshold,
    cluster_variances,
    partition_decomposition,
    pointwise_variances,
    search_clusters,
    variance_tail,
    within_cluster_variances,
)

from conftest import two_group_fixture
from test_sparsity import brute_effective_dimension
from test_trainers import exhaustive_stump

pytestmark = pytest.mark.acceptance

RESULTS = []


def record(number, title, ok, detail):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def stump_ensemble(weights):
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    return normalize(ConvexEnsemble(tuple((float(x), Stump(0, float(i), 1)) for i, x in enumerate(w))))


def test_criterion_01_effective_dimension_oracle():
    rng = np.random.default_rng(101)
    mismatches = 0
    ceiling_violations = 0
    checks = 0
    for k in range(200):
        T = int(rng.integers(1, 51))
        kind = k % 4
        if kind == 0:
            w = rng.random(T)
        elif kind == 1:
            w = np.arange(1, T + 1) ** -rng.uniform(0.5, 3.0)
        elif kind == 2:
            w = np.exp(-rng.uniform(0.1, 2.0) * np.arange(T))
        else:
            w = rng.random(T) * (rng.random(T) < 0.3) + 1e-6
        f = stump_ensemble(w)
        for delta in (1.0, 0.5, 0.1, 0.03):
            for n in (2, 50, 10 ** 4, 10 ** 7):
                e = effective_dimension(f, delta, n)
                checks += 1
                mismatches += e != brute_effective_dimension(f.weights, delta, n)
                ceiling_violations += e > 2 * math.log(n) / delta ** 2
    record(1, "effective-dimension oracle", mismatches == 0 and ceiling_violations == 0,
           f"{checks} (f, delta, n) cases, {mismatches} oracle mismatches, {ceiling_violations} ceiling violations")


def test_criterion_02_example_scaling():
    _, f = synth_data("weight_profile_fixture", 10 ** 4, 2, T=2000, beta=2.0, seed=0)
    params = BoundParams(n=10 ** 4)
    s = fixture_slopes(f, params)
    slope = s["effective_dimension_slope"]
    ok_a = abs(slope - 2 / 3) <= 0.15
    g = stump_ensemble(fixture_weights(2000, 1.0, "exponential"))
    ratios = [effective_dimension(g, d, 10 ** 4) / (10 * (math.log(10 ** 4) + math.log(1 / d))) for d in s["deltas"]]
    ok_b = max(ratios) <= 1.0
    record(2, "example scaling", ok_a and ok_b,
           f"(a) slope {slope:.4f} vs 2/3 +- 0.15 (complexity-term slope {s['complexity_term_slope']:.4f}); "
           f"(b) max e_n / (10 (log n + log 1/delta)) = {max(ratios):.4f}")


def test_criterion_03_solver_exactness():
    rng = np.random.default_rng(3)
    b = rng.uniform(0, 10, 10 ** 4)
    c = rng.uniform(0, 10, 10 ** 4)
    phi_res = max(abs(phi(solve_phi(bi, ci), bi) - ci) for bi, ci in zip(b, c))
    worst = 0.0
    for _ in range(2000):
        x, a, bb = rng.uniform(0, 1, 3)
        beta = rng.uniform(0.05, 0.95)
        y = solve_concave(x, a, bb, beta)
        worst = max(worst, abs(y - (x + a * math.sqrt(y) + bb * y ** beta)))
    sq = abs(solve_concave(0.0, 2.0, 0.0, 0.25) - 4.0)
    golden = abs(solve_concave(1.0, 1.0, 0.0, 0.25) - ((1 + math.sqrt(5)) / 2) ** 2)
    lin = max(abs(fixed_point(lambda x, A=A: A * x, d, n) - A * A / n)
              for A in (0.5, 2.0, 7.0) for d in (0.5, 0.1) for n in (10, 100, 10 ** 4))
    ok = phi_res < 1e-12 and worst < 1e-10 and max(sq, golden, lin) < 1e-10
    record(3, "solver exactness", ok,
           f"phi residual {phi_res:.2e}; concave residual {worst:.2e}; closed forms "
           f"a^2 {sq:.1e}, golden {golden:.1e}, linear psi {lin:.1e}")


def test_criterion_04_maurey():
    rng = np.random.default_rng(4)
    n = 100
    X = rng.random((n, 1))
    head = [(0.5, Stump(0, 0.5, 1))]
    tail_w = rng.random(24)
    tail_w = 0.5 * tail_w / tail_w.sum()
    tail = [(float(w), Stump(0, (i + 0.5) / 24, 1 if i % 2 else -1)) for i, w in enumerate(tail_w)]
    f = normalize(ConvexEnsemble(tuple(head + tail)))
    assert f.weights[0] == 0.5 and f.tail_weights[1] == pytest.approx(0.5, abs=1e-15)
    y = np.where(f.decision_function(X) > 0, 1.0, -1.0)
    data = Dataset(X, y)
    params = BoundParams(n=n)
    rep = check_maurey_tail(f, data, 0.1, 1, params, M=10 ** 5, seed=44, rows=np.arange(20))
    q = rep.quantities
    se_ceiling = 3 * math.sqrt(q["hoeffding_ceiling"] * (1 - q["hoeffding_ceiling"]) / q["M"])
    ok = (q["N"] == 231 and q["unbiased"] and q["max_one_sided"] <= q["hoeffding_ceiling"] + se_ceiling
          and rep.passed)
    record(4, "Maurey unbiasedness and Hoeffding ceiling", ok,
           f"N = {q['N']}, max |mean g - f| z = {q['max_mean_z']:.2f} (<= 4), max one-sided freq "
           f"{q['max_one_sided']:.5f} <= {q['hoeffding_ceiling']:.5f} + {se_ceiling:.5f}; "
           f"max two-sided {q['max_two_sided']:.5f}")


def test_criterion_05_cluster_variance_identity():
    rng = np.random.default_rng(5)
    T, n = 16, 40
    stumps = [Stump(int(i % 2), float(rng.uniform(0.1, 0.9)), 1 if rng.random() < 0.5 else -1) for i in range(T)]
    w = rng.random(T)
    f = normalize(ConvexEnsemble(tuple(zip((w / w.sum()).tolist(), stumps))))
    data = Dataset(rng.random((n, 2)), rng.choice([-1, 1], n))
    c = partition_decomposition(f, np.arange(f.T) % 3)
    rep = check_cluster_variance(c, f, data, M=10 ** 5, seed=55)
    frac = rep.quantities["fraction_within"]
    X = data.features[:20]
    exact = cluster_variances(c, X)
    rows = exact >= 0.05
    vals = sigma_hat_batch(c, X[rows], N=1, M=10 ** 5, seed=56)
    rel = np.abs(vals.mean(axis=0) - exact[rows]) / exact[rows]
    ok = rep.passed and np.all(rel <= 0.02)
    record(5, "cluster-variance identity", ok,
           f"{frac:.0%} of rows within 3 stderr (>= 95%); sigma-hat max relative error {rel.max():.4f} "
           f"over {int(rows.sum())} rows (<= 0.02)")


def test_criterion_06_total_variance():
    rng = np.random.default_rng(6)
    worst_law = 0.0
    worst_dom = -math.inf
    cells = 0
    for _ in range(100):
        T = int(rng.integers(2, 30))
        stumps = list({Stump(int(rng.integers(2)), float(rng.integers(20)) / 20 + 0.025,
                             int(rng.choice([-1, 1]))) for _ in range(T)})
        w = rng.random(len(stumps)) + 1e-3
        f = normalize(ConvexEnsemble(tuple(zip((w / w.sum()).tolist(), stumps))))
        m = int(rng.integers(1, f.T + 1))
        a = np.concatenate([np.arange(m), rng.integers(0, m, f.T - m)])
        rng.shuffle(a)
        c = partition_decomposition(f, a)
        X = rng.random((50, 2))
        s2 = pointwise_variances(f, X)
        law = within_cluster_variances(c, X) + between_cluster_variances(c, X)
        worst_law = max(worst_law, float(np.max(np.abs(law - s2))))
        worst_dom = max(worst_dom, float(np.max(cluster_variances(c, X) - s2)))
        cells += X.shape[0]
    ok = worst_law <= 1e-12 and worst_dom <= 1e-12
    record(6, "law of total variance and domination", ok,
           f"{cells} rows over 100 ensembles; max law error {worst_law:.1e}; max sigma^2(c) - sigma^2 {worst_dom:.1e}")


def test_criterion_07_covering_sandwich():
    rng = np.random.default_rng(7)
    violations = 0
    identity_failures = 0
    pairs = 0
    for _ in range(50):
        n = int(rng.integers(4, 30))
        data = Dataset(rng.random((n, 2)), rng.choice([-1, 1], n))
        k = int(rng.integers(1, 11))
        hyps = [Stump(int(rng.integers(2)), float(rng.random()), int(rng.choice([-1, 1]))) for _ in range(k)]
        for j in range(0, 8):
            eps = 2.0 ** (1 - j)
            g = greedy_covering(hyps, data, eps)[1]
            violations += not (exact_covering(hyps, data, eps) <= g <= exact_covering(hyps, data, eps / 2))
        P = [h.predict(data.features) for h in hyps]
        for a in range(k):
            for b in range(k):
                pairs += 1
                identity_failures += squared_l2(P[a], P[b]) != 2 * np.mean(np.abs(P[a] - P[b]))
    ok = violations == 0 and identity_failures == 0
    record(7, "covering sandwich", ok,
           f"{violations} sandwich violations over 50 sets x 8 dyadic eps; "
           f"L2^2 = 2 L1 exact at {pairs - identity_failures}/{pairs} pairs")


def test_criterion_08_entropy_fixed_point():
    rng = np.random.default_rng(8)
    ceiling_bad = 0
    resid = 0.0
    largest_bad = 0
    capped_bad = 0
    for k in range(50):
        n = int(rng.integers(30, 80))
        data = synth_data("noisy_xor" if k % 2 else "two_gaussians", n, 2, noise=0.1, seed=int(rng.integers(1 << 30)))
        f = adaboost(data, int(rng.integers(3, 25)))
        cp = base_covering_profile(f, data)
        Ninf = n_infty(f, data)
        for d in (0.3, 0.1, 0.01, 1e-4):
            ceiling_bad += entropy_integral(cp, d) > 2 * math.sqrt(Ninf) * d * math.sqrt(math.log(1 / d)) + 1e-15
        curve = EntropyCurve(cp)
        for delta in (0.5, 0.125, 0.03125):
            e = fixed_point(curve, delta, n)
            F = lambda x: curve(delta * math.sqrt(x)) / (delta * math.sqrt(n))  # noqa: E731
            resid = max(resid, abs(F(e) - e))
            above = e * (1.0 + np.geomspace(1e-6, 10.0, 25)) if e > 0 else np.geomspace(1e-12, 10.0, 25)
            largest_bad += sum(F(x) >= x for x in above)
        rep = bound_theorem5(f, data, margin_profile(f, data), BoundParams(n=n, delta_grid=(0.5, 0.25, 0.125)))
        v = rep.details["variants"]
        capped_bad += v["capped"]["total"] > v["entropy"]["total"] + 1e-15
    ok = ceiling_bad == 0 and resid < 1e-10 and largest_bad == 0 and capped_bad == 0
    record(8, "entropy and fixed-point consistency", ok,
           f"entropy ceiling 2 sqrt(N_inf) delta sqrt(log 1/delta) violations {ceiling_bad}; max residual {resid:.1e}; "
           f"F(eps) >= eps above eps* at {largest_bad} samples; capped > uncapped in {capped_bad}/50")


def test_criterion_09_trainers():
    rng = np.random.default_rng(9)
    oracle_bad = 0
    for _ in range(100):
        n, p = int(rng.integers(2, 14)), int(rng.integers(1, 4))
        d = Dataset(rng.integers(0, 6, size=(n, p)).astype(float), rng.choice([-1, 1], n))
        w = rng.random(n)
        w /= w.sum()
        s, e = best_stump(d, w)
        eo, so = exhaustive_stump(d, w)
        oracle_bad += (s != so) or abs(e - eo) > 1e-12
    data = synth_data("two_gaussians", 200, 2, 0.1, seed=9)
    state = adaboost_trace(data, 40)
    reweight = max(abs(math.fsum(state.weights_history[k + 1][h.predict(data.features) != data.labels]) - 0.5)
                   for k, (e, a, h) in enumerate(state.history) if 0 < e < 0.5)
    sep = synth_data("two_gaussians", 200, 2, 0.0, seed=0)
    f = adaboost(sep, 200)
    prof = margin_profile(f, sep)
    ok = oracle_bad == 0 and reweight <= 1e-9 and margin_cdf(prof, 0.0) == 0.0 and min_margin(prof) > 0
    record(9, "trainer correctness", ok,
           f"{oracle_bad}/100 oracle mismatches; max |reweighted error - 1/2| {reweight:.1e}; "
           f"separable run P_n(yf <= 0) = {margin_cdf(prof, 0.0)}, delta_* = {min_margin(prof):.4f}")


def test_criterion_10_cluster_detection():
    data, f, _, _ = two_group_fixture(4000)
    params = BoundParams(n=data.n, m_max=3)
    gamma = delta = 0.5
    c2 = search_clusters(f, data, 2, seed=10)
    m1_fails = variance_tail(pointwise_variances(f, data.features), gamma) > cluster_threshold(1, gamma, delta, params)
    m_hat = cluster_count(f, data, params, gamma, delta, seed=10)
    rep = bound_cluster(f, data, margin_profile(f, data), params, seed=10)
    per_m = rep.details["per_m_totals"]
    ok = c2.objective == 0.0 and m1_fails and m_hat == 2 and per_m["2"] < per_m["1"]
    record(10, "cluster detection", ok,
           f"m = 2 objective {c2.objective}; m = 1 test fails: {m1_fails}; cluster_count = {m_hat}; "
           f"totals m=1 {per_m['1']:.5f} > m=2 {per_m['2']:.5f}")


def test_criterion_11_bound_order():
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(50):
        T = int(rng.integers(1, 30))
        f = stump_ensemble(rng.random(T) ** 3 + 1e-4)
        prof = MarginProfile(rng.uniform(-0.3, 1.0, int(rng.integers(5, 200))))
        p = BoundParams(n=int(rng.integers(10, 10 ** 5)), V=float(rng.uniform(0.5, 20)), t=float(rng.uniform(0, 5)))
        bad += bound_gamma_dim(f, prof, p).total > classic_bound("zero_error_2_4", prof, p).total
    data = synth_data("two_gaussians", 120, 2, 0.1, seed=11)
    g = adaboost(data, 20)
    prof = margin_profile(g, data)
    p = BoundParams(n=data.n, m_max=3)
    t3 = bound_variance(g, data, prof, p).details["branches"]["grid"]
    t4 = bound_cluster(g, data, prof, p, seed=0).details["per_m_totals"]["1"]
    ok = bad == 0 and t3 == t4
    record(11, "bound-order properties", ok,
           f"gamma_dim > zero_error in {bad}/50; variance grid {t3!r} == cluster m=1 {t4!r}")


def test_criterion_12_determinism(tmp_path):
    cfg = {"source": "two_gaussians", "n": 200, "noise": 0.1, "rounds": 30, "replicates": 3,
           "bounds": ["all"], "m_max": 4, "delta_kmax": 10}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert cli_main(["experiment", "--config", str(cfg_path), "--seed", "12", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    same = outs[0] == outs[1]
    agg = json.loads(outs[0])["aggregate"]
    cover = ", ".join(f"{k} {v['coverage_frequency']:.2f}" for k, v in agg["bounds"].items())
    record(12, "end-to-end determinism", same,
           f"byte-identical reports: {same}; coverage (observational): {cover}")
