"""Empirical covering numbers, entropy integrals and the entropy fixed-point bound."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from .ensemble import BoundParams, ConvexEnsemble, Dataset, Stump
from .errors import ConvergenceError, ValidationError
from .margins import MarginProfile, margin_cdf
from .sparsity import CONSTANTS_NOTE, BoundReport, _best

METRICS = ("L1", "L2", "Linf")
MAX_EXACT = 12
MAX_ITER = 10_000


# ---------------------------------------------------------------- distances


def _profiles(hypotheses, data: Dataset | None) -> np.ndarray:
    """k x n matrix of hypothesis values on the sample rows."""
    if isinstance(hypotheses, np.ndarray):
        P = np.asarray(hypotheses, dtype=np.float64)
        return P.reshape(1, -1) if P.ndim == 1 else P
    hyps = list(hypotheses)
    if not hyps:
        return np.zeros((0, 0 if data is None else data.n))
    if data is None:
        raise ValidationError("a dataset is needed to evaluate hypotheses")
    return np.vstack([h.predict(data.features) if isinstance(h, Stump) else np.asarray(h(data.features), float)
                      for h in hyps])


def squared_l2(a, b) -> float:
    """``n^-1 sum (a - b)^2``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.mean((a - b) ** 2))


def profile_distance(a, b, metric: str = "L2") -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if metric == "L2":
        return math.sqrt(squared_l2(a, b))
    if metric == "L1":
        return float(np.mean(np.abs(a - b)))
    if metric == "Linf":
        return float(np.max(np.abs(a - b)))
    raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")


def empirical_distance(h, g, data: Dataset, metric: str = "L2") -> float:
    """Distance between two hypotheses in the empirical L1, L2 or Linf metric."""
    return profile_distance(h.predict(data.features), g.predict(data.features), metric)


def distance_matrix(profiles: np.ndarray, metric: str = "L2") -> np.ndarray:
    P = np.asarray(profiles, dtype=np.float64)
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")
    diff = np.abs(P[:, None, :] - P[None, :, :])
    if metric == "L2":
        return np.sqrt(np.mean(diff ** 2, axis=2))
    if metric == "L1":
        return np.mean(diff, axis=2)
    return diff.max(axis=2) if P.shape[1] else np.zeros((P.shape[0], P.shape[0]))


# ---------------------------------------------------------------- covering numbers


def greedy_cover_indices(D: np.ndarray, eps: float) -> list[int]:
    """Farthest-point greedy centers covering every point within eps.

    The first center is index 0; each next center is the uncovered point
    farthest from the current centers (lowest index on ties).  Centers are
    pairwise more than eps apart.
    """
    k = D.shape[0]
    if k == 0:
        return []
    centers = [0]
    near = D[0].copy()
    while True:
        far = np.where(near > eps, near, -np.inf)
        j = int(np.argmax(far))
        if not far[j] > -np.inf:
            return centers
        centers.append(j)
        near = np.minimum(near, D[j])


def greedy_covering(hypotheses, data: Dataset, eps: float, metric: str = "L2"):
    """Greedy eps-net of a hypothesis set; returns ``(net, count)``."""
    if not eps > 0:
        raise ValidationError(f"eps must be > 0, got {eps}")
    hyps = hypotheses if isinstance(hypotheses, np.ndarray) else list(hypotheses)
    P = _profiles(hyps, data)
    idx = greedy_cover_indices(distance_matrix(P, metric), eps)
    net = P[idx] if isinstance(hyps, np.ndarray) else [hyps[i] for i in idx]
    return net, len(idx)


def exact_cover_size(D: np.ndarray, eps: float) -> int:
    """Smallest number of centers (from the set) covering every point within eps."""
    k = D.shape[0]
    if k > MAX_EXACT:
        raise ValidationError(f"exact covering limited to {MAX_EXACT} hypotheses, got {k}")
    if k == 0:
        return 0
    within = D <= eps
    for size in range(1, k + 1):
        for centers in itertools.combinations(range(k), size):
            if np.all(within[list(centers)].any(axis=0)):
                return size
    return k


def exact_covering(hypotheses, data: Dataset, eps: float, metric: str = "L2") -> int:
    """Minimal covering number by subset enumeration (at most 12 hypotheses)."""
    if not eps > 0:
        raise ValidationError(f"eps must be > 0, got {eps}")
    hyps = hypotheses if isinstance(hypotheses, np.ndarray) else list(hypotheses)
    if len(hyps) > MAX_EXACT:
        raise ValidationError(f"exact covering limited to {MAX_EXACT} hypotheses, got {len(hyps)}")
    return exact_cover_size(distance_matrix(_profiles(hyps, data), metric), eps)


@dataclass(eq=False)
class CoveringProfile:
    """Step function eps -> covering number on a decreasing eps grid.

    Between grid points the count of the next smaller grid point is used
    (an upper estimate since covering numbers decrease in eps); below the
    grid the number of distinct profiles applies.
    """

    eps_grid: tuple
    counts: tuple
    metric: str = "L2"
    source: str = "greedy"
    n_distinct: int = 0

    def __post_init__(self):
        if len(self.eps_grid) != len(self.counts):
            raise ValidationError("eps_grid and counts differ in length")
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])):
            raise ValidationError("eps_grid must be strictly decreasing")

    def count_at(self, eps: float) -> int:
        for e, c in zip(self.eps_grid, self.counts):
            if e <= eps:
                return c
        return self.n_distinct

    def pieces(self, lo: float, hi: float):
        """Split ``[lo, hi]`` into ``(a, b, N)`` intervals of constant count."""
        cuts = sorted({lo, hi} | {e for e in self.eps_grid if lo < e < hi})
        return [(a, b, self.count_at(a)) for a, b in zip(cuts, cuts[1:])]

    def rows(self):
        return list(zip(self.eps_grid, self.counts))


def _support_profiles(f: ConvexEnsemble, data: Dataset) -> np.ndarray:
    stumps = [h for w, h in f.terms if w != 0.0]
    if not stumps:
        return np.zeros((0, data.n))
    return np.unique(np.vstack([h.predict(data.features) for h in stumps]), axis=0)


def base_covering_profile(f: ConvexEnsemble, data: Dataset, grid=None, metric: str = "L2") -> CoveringProfile:
    """Greedy covering numbers of the (deduplicated) support of f.

    The default grid is ``2, 1, 1/2, ...`` down to the first value below the
    smallest positive pairwise distance.
    """
    P = _support_profiles(f, data)
    k = P.shape[0]
    D = distance_matrix(P, metric) if k else np.zeros((0, 0))
    if grid is None:
        pos = D[D > 0]
        floor = pos.min() if pos.size else 2.0
        grid = [2.0]
        while grid[-1] >= floor:
            grid.append(grid[-1] / 2.0)
    grid = tuple(sorted(set(float(e) for e in grid), reverse=True))
    counts = tuple(len(greedy_cover_indices(D, e)) for e in grid)
    return CoveringProfile(grid, counts, metric=metric, source="greedy", n_distinct=k)


def n_infty(f: ConvexEnsemble, data: Dataset) -> int:
    """Number of distinct sample sign-profiles in the support of f."""
    return int(_support_profiles(f, data).shape[0])


# ---------------------------------------------------------------- entropy integrals


def sqrt_log_antiderivative(eps: float) -> float:
    """``G(eps) = int_0^eps sqrt(log(1/u)) du`` for ``0 <= eps <= 1``."""
    if eps <= 0.0:
        return 0.0
    u = math.log(1.0 / eps)
    if u <= 0.0:
        return math.sqrt(math.pi) / 2.0
    return eps * math.sqrt(u) + math.sqrt(math.pi) / 2.0 * float(erfc(math.sqrt(u)))


def _uncapped(profile: CoveringProfile, lo: float, hi: float) -> float:
    total = 0.0
    for a, b, N in profile.pieces(lo, hi):
        if N > 0:
            total += math.sqrt(N) * (sqrt_log_antiderivative(b) - sqrt_log_antiderivative(a))
    return total


def entropy_integral(profile: CoveringProfile, delta: float) -> float:
    """``int_0^delta sqrt(N(eps) log(1/eps)) d eps``, integrated in closed form per step."""
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    return _uncapped(profile, 0.0, delta)


def _cap_active_interval(N: int, q: float):
    """eps-interval where ``eps^-q < sqrt(N log(1/eps))``, or None.

    In ``u = log(1/eps)`` the condition reads ``exp(2 q u) < N u``; the
    left side minus the right is convex in u, so the set is an interval.
    """
    if N <= 0:
        return None
    h = lambda u: math.exp(2 * q * u) - N * u  # noqa: E731
    u_star = math.log(N / (2 * q)) / (2 * q)
    if u_star <= 0 or h(u_star) >= 0:
        return None
    u1 = brentq(h, 0.0, u_star, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    hi = 2 * u_star
    while h(hi) <= 0:
        hi *= 2
    u2 = brentq(h, u_star, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return math.exp(-u2), math.exp(-u1)


def _power_integral(a: float, b: float, q: float) -> float:
    return (b ** (1 - q) - a ** (1 - q)) / (1 - q)


def _capped_piece(a: float, b: float, N: int, q: float) -> float:
    act = _cap_active_interval(N, q)
    if act is None:
        return math.sqrt(N) * (sqrt_log_antiderivative(b) - sqrt_log_antiderivative(a)) if N > 0 else 0.0
    lo, hi = max(a, act[0]), min(b, act[1])
    if lo >= hi:
        return math.sqrt(N) * (sqrt_log_antiderivative(b) - sqrt_log_antiderivative(a))
    val = _power_integral(lo, hi, q)
    val += math.sqrt(N) * (sqrt_log_antiderivative(lo) - sqrt_log_antiderivative(a))
    val += math.sqrt(N) * (sqrt_log_antiderivative(b) - sqrt_log_antiderivative(hi))
    return val


def capped_integrand(profile: CoveringProfile, params: BoundParams, eps: float) -> float:
    """``min(sqrt(N log(1/e)), e^(-V/(V+2)))`` at ``e = max(eps, sqrt(t/n))``."""
    e = max(eps, math.sqrt(params.t / params.n))
    q = params.V / (params.V + 2.0)
    ent = profile.count_at(e) * math.log(1.0 / e) if e < 1 else 0.0
    return min(math.sqrt(max(ent, 0.0)), e ** -q)


def capped_entropy_integral(profile: CoveringProfile, params: BoundParams, delta: float) -> float:
    """Entropy integral with the whole-hull cap and argument frozen below ``sqrt(t/n)``."""
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    return _capped(profile, params, delta)


def _capped(profile, params, delta):
    s0 = math.sqrt(params.t / params.n)
    q = params.V / (params.V + 2.0)
    val = min(delta, s0) * capped_integrand(profile, params, s0) if s0 > 0 else 0.0
    if s0 < delta:
        for a, b, N in profile.pieces(s0, delta):
            val += _capped_piece(a, b, N, q)
    return val


@dataclass(eq=False)
class EntropyCurve:
    """Callable entropy integral ``psi(x)``, clamped at x = 1, with cached values."""

    profile: CoveringProfile
    params: BoundParams | None = None
    capped: bool = False
    nodes: dict = field(default_factory=dict)

    def __call__(self, x: float) -> float:
        x = min(max(float(x), 0.0), 1.0)
        if x not in self.nodes:
            if x == 0.0:
                v = 0.0
            elif self.capped:
                v = _capped(self.profile, self.params, x)
            else:
                v = _uncapped(self.profile, 0.0, x)
            self.nodes[x] = v
        return self.nodes[x]


def fixed_point(psi, delta: float, n: float, tol: float = 1e-15) -> float:
    """Largest solution of ``eps = psi(delta sqrt(eps)) / (delta sqrt(n))``.

    Iterates downward from a starting point where the map lies below the
    identity; concavity of psi makes the iterates decrease to the largest
    fixed point.
    """
    if not delta > 0 or not n > 0:
        raise ValidationError("fixed_point needs delta > 0 and n > 0")
    scale = delta * math.sqrt(n)

    def F(e):
        return psi(delta * math.sqrt(e)) / scale

    eps = max(1.0, F(1.0))
    while F(eps) > eps:
        eps *= 2.0
        if math.isinf(eps):
            raise ConvergenceError("fixed_point: map stays above the identity")
    for _ in range(MAX_ITER):
        new = F(eps)
        if new <= 0.0:
            return 0.0
        if not new < eps or eps - new <= tol * max(eps, 1.0):
            return new
        eps = new
    raise ConvergenceError(f"fixed_point did not converge in {MAX_ITER} iterations")


def remark1_term(n_inf: int, n: float, delta: float) -> float:
    """``N / n * log(n / (delta N))`` with the log floored at 1."""
    if n_inf <= 0:
        return 0.0
    return n_inf / n * max(1.0, math.log(n / (delta * n_inf)))


def bound_theorem5(f: ConvexEnsemble, data: Dataset, profile: MarginProfile, params: BoundParams,
                   covering: CoveringProfile | None = None) -> BoundReport:
    """Adaptive entropy bound ``K inf_delta [P_n + eps_hat(delta) + t/(n delta^2)]``.

    Three versions of ``eps_hat`` are evaluated: the entropy fixed point,
    the capped-entropy fixed point and the simple distinct-profile term.
    The smallest total is reported; ``details["variants"]`` holds all three.
    """
    cp = covering if covering is not None else base_covering_profile(f, data)
    n, t, K = params.n, params.t, params.K
    n_inf = n_infty(f, data)
    curves = {"entropy": EntropyCurve(cp), "capped": EntropyCurve(cp, params, capped=True)}
    variants = {}
    for name in ("entropy", "capped", "remark1"):
        rows = []
        for delta in params.delta_grid:
            if name == "remark1":
                e_hat = remark1_term(n_inf, n, delta)
            else:
                e_hat = fixed_point(curves[name], delta, n)
            m, c, conf = K * margin_cdf(profile, delta), K * e_hat, K * t / (n * delta * delta)
            rows.append((delta, m + c + conf, (m, c, conf)))
        variants[name] = _best(rows) + (rows,)
    name = min(variants, key=lambda k: (variants[k][1], variants[k][0]))
    delta, total, (m, c, conf), rows = variants[name]
    log2n = math.log(n) ** 2 if n > 1 else float("nan")
    return BoundReport(
        "theorem5", delta, m, c, conf, total,
        notes=[CONSTANTS_NOTE, "covering numbers are greedy upper estimates on the support base",
               f"t / log^2 n = {t / log2n:.4g}; the bound assumes t of order log^2 n or larger"],
        details={"variant": name, "n_infty": n_inf,
                 "variants": {k: {"delta": v[0], "total": v[1]} for k, v in variants.items()},
                 "covering": [[e, c_] for e, c_ in cp.rows()]},
        curve=[(d, tot) for d, tot, _ in sorted(rows)],
    )


# ---------------------------------------------------------------- references and Monte Carlo


def hull_entropy_reference(N, eps: float, C: float = 0.0) -> tuple[float, float]:
    """Reference entropy ``N(eps) log(1/eps)`` of a restricted hull and its radius ``(2 + C) eps``.

    ``N`` is a number or a callable step function.
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    if C < 0:
        raise ValidationError(f"C must be >= 0, got {C}")
    count = N(eps) if callable(N) else N
    return count * math.log(1.0 / eps), (2.0 + C) * eps


def rademacher_estimate(hypotheses, data: Dataset | None, draws: int, seed, chunk: int = 4096):
    """Monte Carlo mean and standard error of ``sup_h |n^-1 sum eps_i h(X_i)|``."""
    if draws < 1:
        raise ValidationError(f"draws must be >= 1, got {draws}")
    hyps = hypotheses if isinstance(hypotheses, np.ndarray) else list(hypotheses)
    H = _profiles(hyps, data)
    n = H.shape[1] if H.size else (data.n if data is not None else 0)
    if H.size == 0 or n == 0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    sups = np.empty(draws)
    for start in range(0, draws, chunk):
        k = min(chunk, draws - start)
        signs = rng.integers(0, 2, size=(k, n)) * 2.0 - 1.0
        sups[start:start + k] = np.abs(signs @ H.T).max(axis=1) / n
    se = float(sups.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return float(sups.mean()), se
