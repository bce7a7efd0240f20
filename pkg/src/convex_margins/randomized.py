"""Randomized approximations of convex combinations and Monte Carlo checks of their tails.

Monte Carlo work is split into fixed-size blocks, each with its own child
seed from ``SeedSequence(seed)``, so results depend only on the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import BoundParams, ConvexEnsemble, Dataset
from .errors import ValidationError
from .variance import ClusterDecomposition, cluster_variances

BLOCK = 1000
Z_GATE = 3.0


def _blocks(M: int, seed, block: int = BLOCK):
    """Yield ``(size, rng)`` per block."""
    nblocks = -(-M // block)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for i, child in enumerate(ss.spawn(nblocks)):
        yield min(block, M - i * block), np.random.default_rng(child)


def wilson_interval(k: int, M: int, z: float = Z_GATE) -> tuple[float, float]:
    """Wilson score interval for a binomial frequency k / M."""
    if M <= 0:
        return 0.0, 1.0
    p = k / M
    den = 1 + z * z / M
    mid = (p + z * z / (2 * M)) / den
    half = z * math.sqrt(p * (1 - p) / M + z * z / (4 * M * M)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def binomial_gate(freq: float, ceiling: float, M: int, z: float = Z_GATE) -> bool:
    """``freq <= ceiling + z * sqrt(ceiling (1 - ceiling) / M)``."""
    c = min(max(ceiling, 0.0), 1.0)
    return freq <= c + z * math.sqrt(c * (1 - c) / M)


@dataclass
class CheckReport:
    """Outcome of a Monte Carlo check: verdict, scalar quantities and per-row arrays."""

    check: str
    passed: bool
    quantities: dict = field(default_factory=dict)
    per_row: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "passed": bool(self.passed),
            "quantities": self.quantities,
            "per_row": {k: [float(v) for v in vals] for k, vals in self.per_row.items()},
        }


# ---------------------------------------------------------------- Maurey sampler


@dataclass(eq=False)
class MaureySample:
    """Head of the d largest terms kept exactly plus N draws from the tail measure.

    ``draws`` are term indices into ``ensemble.terms``.
    """

    ensemble: ConvexEnsemble
    d: int
    N: int
    draws: np.ndarray
    gamma_d: float
    flagged: bool = False

    def evaluate(self, X) -> np.ndarray:
        f = self.ensemble
        H = f.outputs(X)
        g = f.weights[: self.d] @ H[: self.d] if self.d else np.zeros(H.shape[1])
        if self.draws.size:
            counts = np.bincount(self.draws, minlength=f.T).astype(np.float64)
            g = g + self.gamma_d / self.N * (counts @ H)
        return g


def _tail_measure(f: ConvexEnsemble, d: int):
    w = f.weights[d:]
    gamma = math.fsum(w)
    return w, gamma


def maurey_sample(f: ConvexEnsemble, d: int, N: int, seed) -> MaureySample:
    """Draw N i.i.d. tail hypotheses with probabilities ``lambda_k / gamma_d``."""
    if f.mode != "conv":
        raise ValidationError("maurey_sample needs a conv ensemble; use fold_signs() first")
    if not 0 <= d <= f.T:
        raise ValidationError(f"d must lie in [0, {f.T}], got {d}")
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    w, gamma = _tail_measure(f, d)
    if gamma <= 0.0:
        return MaureySample(f, d, N, np.zeros(0, dtype=np.intp), 0.0, flagged=True)
    rng = np.random.default_rng(seed)
    draws = d + rng.choice(w.size, size=N, p=w / gamma)
    return MaureySample(f, d, N, draws, gamma)


def maurey_N(gamma_d: float, delta: float, n: float) -> int:
    """``ceil(2 gamma_d^2 / delta^2 * log n)``, at least 1."""
    return max(1, math.ceil(2.0 * gamma_d * gamma_d / (delta * delta) * math.log(n)))


def hoeffding_ceiling(N: int, delta: float, gamma_d: float) -> float:
    if gamma_d <= 0:
        return 0.0
    return math.exp(-N * delta * delta / (2.0 * gamma_d * gamma_d))


def check_maurey_tail(f: ConvexEnsemble, data: Dataset, delta: float, d: int, params: BoundParams,
                      M: int, seed, rows=None) -> CheckReport:
    """Monte Carlo check of unbiasedness and the Hoeffding tail of the Maurey approximant.

    Passes when, at every checked row, the mean of g is within 4 standard
    errors of f, the one-sided exceedance frequency of ``y(g - f) >= delta``
    clears the Hoeffding ceiling by the binomial gate, and the two-sided
    frequency clears twice the ceiling.
    """
    if not delta > 0:
        raise ValidationError(f"delta must be > 0, got {delta}")
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    rows = np.arange(data.n) if rows is None else np.asarray(rows, dtype=np.intp)
    X, y = data.features[rows], data.labels[rows]
    w, gamma = _tail_measure(f, d)
    N = maurey_N(gamma, delta, params.n) if gamma > 0 else 0
    ceiling = hoeffding_ceiling(N, delta, gamma)
    fx = f.decision_function(X)
    k = rows.size
    one = np.zeros(k)
    two = np.zeros(k)
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    if gamma > 0:
        H_tail = f.outputs(X)[d:]
        tail_mean = (w / gamma) @ H_tail
        p = w / gamma
        for size, rng in _blocks(M, seed):
            counts = rng.multinomial(N, p, size=size).astype(np.float64)
            # g - f depends only on the tail: gamma * (sample mean - tail mean).
            dev = gamma * (counts @ H_tail / N - tail_mean)
            one += np.count_nonzero(y * dev >= delta, axis=0)
            two += np.count_nonzero(np.abs(dev) >= delta, axis=0)
            s1 += dev.sum(axis=0)
            s2 += (dev * dev).sum(axis=0)
    freq1, freq2 = one / M, two / M
    mean_dev = s1 / M
    var = np.maximum(s2 / M - mean_dev ** 2, 0.0)
    se = np.sqrt(var / max(M - 1, 1))
    z = np.where(se > 0, np.abs(mean_dev) / np.where(se > 0, se, 1.0), np.where(np.abs(mean_dev) > 1e-12, np.inf, 0.0))
    unbiased = bool(np.all(z <= 4.0))
    tail_ok = all(binomial_gate(p1, ceiling, M) for p1 in freq1)
    two_ok = all(binomial_gate(p2, min(1.0, 2 * ceiling), M) for p2 in freq2)
    wl = [wilson_interval(int(c), M) for c in one]
    return CheckReport(
        "maurey",
        unbiased and tail_ok and two_ok,
        quantities={
            "d": d, "N": N, "gamma_d": gamma, "delta": delta, "M": M, "n": params.n,
            "hoeffding_ceiling": ceiling, "target": 1.0 / params.n,
            "max_one_sided": float(freq1.max(initial=0.0)),
            "max_two_sided": float(freq2.max(initial=0.0)),
            "max_mean_z": float(z.max(initial=0.0)),
            "unbiased": unbiased, "one_sided_ok": tail_ok, "two_sided_ok": two_ok,
            "max_wilson_upper": max((u for _, u in wl), default=0.0),
        },
        per_row={"f": fx, "mean_g": fx + mean_dev, "stderr": se, "one_sided": freq1, "two_sided": freq2},
    )


# ---------------------------------------------------------------- cluster sampler


@dataclass(eq=False)
class ClusterSample:
    """N replicates of one draw per cluster; ``draws[j]`` holds cluster j's term indices."""

    decomposition: ClusterDecomposition
    N: int
    draws: tuple

    def replicate_values(self, X) -> np.ndarray:
        """N x rows matrix of ``g_k(x) = sum_j alpha_j xi_k^j(x)``."""
        c = self.decomposition
        H = c.ensemble.outputs(X)
        out = np.zeros((self.N, H.shape[1]))
        for a, idx in zip(c.alphas, self.draws):
            out += a * H[idx]
        return out

    def evaluate(self, X) -> np.ndarray:
        c = self.decomposition
        H = c.ensemble.outputs(X)
        g = np.zeros(H.shape[1])
        for a, idx in zip(c.alphas, self.draws):
            counts = np.bincount(idx, minlength=c.ensemble.T).astype(np.float64)
            g = g + a / self.N * (counts @ H)
        return g


def cluster_sample(c: ClusterDecomposition, N: int, seed) -> ClusterSample:
    """Independent draws ``xi_k^j ~ lambda^j`` for k = 1..N and every cluster j."""
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    rng = np.random.default_rng(seed)
    draws = tuple(idx[rng.choice(idx.size, size=N, p=w)] for idx, w in zip(c.members, c.sub_weights))
    return ClusterSample(c, N, draws)


def _single_draw_values(c: ClusterDecomposition, H: np.ndarray, size: int, rng) -> np.ndarray:
    """size x rows matrix of single-replicate values ``g_1(x)``."""
    out = np.zeros((size, H.shape[1]))
    for a, idx, w in zip(c.alphas, c.members, c.sub_weights):
        out += a * H[idx][rng.choice(idx.size, size=size, p=w)]
    return out


def check_cluster_variance(c: ClusterDecomposition, f: ConvexEnsemble, data: Dataset, M: int, seed,
                           rows=None) -> CheckReport:
    """Monte Carlo variance of one cluster replicate against the analytic cluster variance.

    Passes when the difference is within 3 standard errors of the variance
    estimator at no fewer than 95% of the checked rows.
    """
    if M < 100:
        raise ValidationError(f"check_cluster_variance needs M >= 100, got {M}")
    rows = np.arange(data.n) if rows is None else np.asarray(rows, dtype=np.intp)
    X = data.features[rows]
    H = c.ensemble.outputs(X)
    fx = c.ensemble.weights @ H
    analytic = cluster_variances(c, X)
    k = rows.size
    m1, m2, m3, m4 = (np.zeros(k) for _ in range(4))
    for size, rng in _blocks(M, seed):
        dev = _single_draw_values(c, H, size, rng) - fx
        m1 += dev.sum(axis=0)
        m2 += (dev ** 2).sum(axis=0)
        m3 += (dev ** 3).sum(axis=0)
        m4 += (dev ** 4).sum(axis=0)
    m1, m2, m3, m4 = m1 / M, m2 / M, m3 / M, m4 / M
    var = np.maximum(m2 - m1 ** 2, 0.0) * M / (M - 1)
    central4 = m4 - 4 * m1 * m3 + 6 * m1 ** 2 * m2 - 3 * m1 ** 4
    se = np.sqrt(np.maximum(central4 - var ** 2, 0.0) / M)
    ok = np.abs(var - analytic) <= Z_GATE * se + 1e-12
    frac = float(np.mean(ok))
    return CheckReport(
        "cluster-variance",
        frac >= 0.95,
        quantities={"M": M, "m": c.m, "fraction_within": frac,
                    "max_abs_difference": float(np.max(np.abs(var - analytic)))},
        per_row={"analytic": analytic, "monte_carlo": var, "stderr": se},
    )


def sigma_hat_summands(c: ClusterDecomposition, H: np.ndarray, N: int, rng, size: int = 1) -> np.ndarray:
    """size x N x rows array of ``(sum_j alpha_j (xi^{j,1} - xi^{j,2}))^2 / 2``."""
    diff = np.zeros((size, N, H.shape[1]))
    for a, idx, w in zip(c.alphas, c.members, c.sub_weights):
        Hc = H[idx]
        first = rng.choice(idx.size, size=(size, N), p=w)
        second = rng.choice(idx.size, size=(size, N), p=w)
        diff += a * (Hc[first] - Hc[second])
    return diff * diff / 2.0


def sigma_hat(c: ClusterDecomposition, x, N: int, seed) -> float:
    """Paired-difference estimate of ``sigma^2(c; x)`` from N pairs of independent draws."""
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    H = c.ensemble.outputs(x)
    rng = np.random.default_rng(seed)
    return float(sigma_hat_summands(c, H, N, rng)[0, :, 0].mean())


def sigma_hat_batch(c: ClusterDecomposition, X, N: int, M: int, seed) -> np.ndarray:
    """M x rows matrix of independent sigma-hat values, each from N pairs."""
    H = c.ensemble.outputs(X)
    out = []
    for size, rng in _blocks(M, seed, block=max(1, BLOCK // max(N, 1))):
        out.append(sigma_hat_summands(c, H, N, rng, size).mean(axis=1))
    return np.concatenate(out, axis=0)


def bernstein_N(gamma: float, delta: float, n: float) -> int:
    """``ceil(4 gamma / delta^2 * log n)``."""
    return max(1, math.ceil(4.0 * gamma / (delta * delta) * math.log(n)))


def bernstein_ceiling(N: int, gamma: float, delta: float) -> float:
    return math.exp(-0.25 * min(N * delta * delta / gamma, N * delta))


def check_bernstein_tails(c: ClusterDecomposition, data: Dataset, gamma: float, delta: float,
                          params: BoundParams, M: int, seed, K_user: float = 16.0,
                          M_step4: int | None = None) -> CheckReport:
    """Bernstein tail of the cluster approximant and the variance-estimator tails.

    Step 2: on rows with ``sigma^2(c; x) <= gamma`` the frequency of
    ``y(g - f) >= delta`` with ``N = ceil(4 gamma / delta^2 log n)`` is gated
    against ``exp(-N delta^2 / (4 gamma))``.  Step 4: frequencies of
    ``sigma_hat >= 2 gamma`` where ``sigma^2 <= gamma`` and of
    ``sigma_hat <= 3 gamma`` where ``sigma^2 >= 4 gamma`` are gated against
    ``exp(-N4 gamma / K_user)`` with ``N4 = ceil(K_user / gamma log n)``.
    ``K_min`` is the smallest constant whose ceiling would still pass at N4.
    """
    if not 0 < delta <= gamma:
        raise ValidationError(f"need 0 < delta <= gamma, got delta={delta}, gamma={gamma}")
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    X, y = data.features, data.labels
    H = c.ensemble.outputs(X)
    fx = c.ensemble.weights @ H
    s2 = cluster_variances(c, X)
    n = params.n

    N2 = bernstein_N(gamma, delta, n)
    ceiling2 = bernstein_ceiling(N2, gamma, delta)
    low = s2 <= gamma
    hits = np.zeros(data.n)
    ss = np.random.SeedSequence(seed)
    seed2, seed4 = ss.spawn(2)
    probs = [w for w in c.sub_weights]
    for size, rng in _blocks(M, seed2):
        g = np.zeros((size, data.n))
        for a, idx, p in zip(c.alphas, c.members, probs):
            counts = rng.multinomial(N2, p, size=size).astype(np.float64)
            g += a * (counts @ H[idx]) / N2
        hits += np.count_nonzero(y * (g - fx) >= delta, axis=0)
    freq2 = hits / M
    step2_ok = all(binomial_gate(p, ceiling2, M) for p in freq2[low])

    N4 = max(1, math.ceil(K_user / gamma * math.log(n)))
    ceiling4 = math.exp(-N4 * gamma / K_user)
    M4 = M if M_step4 is None else M_step4
    high = s2 >= 4 * gamma
    over = np.zeros(data.n)
    under = np.zeros(data.n)
    if np.any(low) or np.any(high):
        for size, rng in _blocks(M4, seed4, block=max(1, BLOCK // 10)):
            sh = sigma_hat_summands(c, H, N4, rng, size).mean(axis=1)
            over += np.count_nonzero(sh >= 2 * gamma, axis=0)
            under += np.count_nonzero(sh <= 3 * gamma, axis=0)
    f_over = over[low] / M4
    f_under = under[high] / M4
    step4 = np.concatenate([f_over, f_under])
    step4_ok = all(binomial_gate(p, ceiling4, M4) for p in step4)
    worst = int(np.max(np.concatenate([over[low], under[high]]), initial=0))
    p_lower = wilson_interval(worst, M4)[0]
    K_min = N4 * gamma / math.log(1.0 / p_lower) if p_lower > 0 else 0.0
    return CheckReport(
        "bernstein",
        step2_ok and step4_ok,
        quantities={
            "gamma": gamma, "delta": delta, "n": n, "M": M, "M_step4": M4,
            "N_step2": N2, "ceiling_step2": ceiling2, "target": 1.0 / n,
            "max_step2": float(freq2[low].max(initial=0.0)), "rows_step2": int(low.sum()),
            "N_step4": N4, "K_user": K_user, "ceiling_step4": ceiling4,
            "max_step4_over": float(f_over.max(initial=0.0)),
            "max_step4_under": float(f_under.max(initial=0.0)),
            "rows_step4_low": int(low.sum()), "rows_step4_high": int(high.sum()),
            "K_min": K_min, "step2_ok": step2_ok, "step4_ok": step4_ok,
        },
        per_row={"cluster_variance": s2, "step2_frequency": freq2},
    )
