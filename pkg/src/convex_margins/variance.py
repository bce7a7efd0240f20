"""Pointwise and cluster variances of a convex combination, and the bounds using them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import BoundParams, ConvexEnsemble, Dataset, dyadic_grid
from .errors import StructuralError, ValidationError
from .margins import MarginProfile, margin_cdf
from .sparsity import CONSTANTS_NOTE, LOG_FLOOR_NOTE, BoundReport, _best, log_ratio

N_RESTARTS = 8
KMEANS_MAX_ITER = 300


def _as_conv(f: ConvexEnsemble) -> ConvexEnsemble:
    # Variances are defined for a probability measure over hypotheses.
    return f.fold_signs() if f.mode == "sconv" else f


def _rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(1, -1) if X.ndim == 1 else X


def _measure_variance(weights: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Variance of the outputs H (k x n) under the discrete measure ``weights``."""
    mean = weights @ H
    return weights @ (H - mean) ** 2


def pointwise_variances(f: ConvexEnsemble, X) -> np.ndarray:
    """``sigma^2_lambda(x)`` at every row of X."""
    f = _as_conv(f)
    X = _rows(X)
    if f.T == 0:
        return np.zeros(X.shape[0])
    return _measure_variance(f.weights, f.outputs(X))


def pointwise_variance(f: ConvexEnsemble, x) -> float:
    """``sum_k lambda_k (h_k(x) - f(x))^2`` at a single row."""
    return float(pointwise_variances(f, x)[0])


@dataclass(eq=False)
class ClusterDecomposition:
    """Hard partition of an ensemble's terms into m weighted sub-measures.

    ``alphas[k]`` is the total weight of cluster k and ``sub_weights[k]``
    the cluster's weights divided by it, aligned with ``members[k]``.
    """

    ensemble: ConvexEnsemble
    assignment: np.ndarray
    alphas: np.ndarray
    members: tuple
    sub_weights: tuple
    objective: float = float("nan")
    flagged: bool = False
    inertia_trace: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.members)

    def reconstruct(self) -> np.ndarray:
        """``sum_k alpha_k lambda^k`` as a length-T weight vector."""
        out = np.zeros(self.ensemble.T)
        for a, idx, w in zip(self.alphas, self.members, self.sub_weights):
            out[idx] += a * w
        return out

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "alphas": [float(a) for a in self.alphas],
            "members": [[int(i) for i in idx] for idx in self.members],
            "sub_weights": [[float(v) for v in w] for w in self.sub_weights],
            "objective": float(self.objective),
            "flagged": self.flagged,
        }


def partition_decomposition(f: ConvexEnsemble, assignment) -> ClusterDecomposition:
    """Decomposition induced by a term-to-cluster labelling ``0..m-1``."""
    f = _as_conv(f)
    a = np.asarray(assignment, dtype=np.intp).ravel()
    if a.shape[0] != f.T:
        raise ValidationError(f"assignment has {a.shape[0]} entries for {f.T} terms")
    if a.size == 0 or a.min() < 0:
        raise ValidationError("cluster labels must be nonnegative")
    m = int(a.max()) + 1
    members, subs, alphas = [], [], []
    for k in range(m):
        idx = np.flatnonzero(a == k)
        if idx.size == 0:
            raise ValidationError(f"cluster {k} is empty")
        w = f.weights[idx]
        alpha = math.fsum(w)
        if alpha <= 0:
            raise ValidationError(f"cluster {k} has zero weight")
        members.append(idx)
        subs.append(w / alpha)
        alphas.append(alpha)
    return ClusterDecomposition(f, a, np.array(alphas), tuple(members), tuple(subs))


def _check_consistent(c: ClusterDecomposition, f: ConvexEnsemble):
    f = _as_conv(f)
    if c.ensemble is f:
        return
    same = (c.ensemble.T == f.T and np.array_equal(c.ensemble.weights, f.weights)
            and c.ensemble.stumps == f.stumps)
    if not same:
        raise StructuralError("cluster decomposition was built for a different ensemble")


def cluster_variances(c: ClusterDecomposition, X) -> np.ndarray:
    """``sigma^2(c; x) = sum_k alpha_k^2 sigma^2_{lambda^k}(x)`` at every row of X."""
    X = _rows(X)
    if c.m == 1:
        # A single cluster is the whole measure; delegate so both agree exactly.
        return pointwise_variances(c.ensemble, X)
    H = c.ensemble.outputs(X)
    out = np.zeros(X.shape[0])
    for a, idx, w in zip(c.alphas, c.members, c.sub_weights):
        out += a * a * _measure_variance(w, H[idx])
    return out


def cluster_variance(c: ClusterDecomposition, f: ConvexEnsemble, x) -> float:
    _check_consistent(c, f)
    return float(cluster_variances(c, x)[0])


def between_cluster_variances(c: ClusterDecomposition, X) -> np.ndarray:
    """``sum_k alpha_k (f_{lambda^k}(x) - f(x))^2``, the other half of the total-variance split."""
    X = _rows(X)
    H = c.ensemble.outputs(X)
    f_all = c.ensemble.weights @ H
    out = np.zeros(X.shape[0])
    for a, idx, w in zip(c.alphas, c.members, c.sub_weights):
        out += a * (w @ H[idx] - f_all) ** 2
    return out


def within_cluster_variances(c: ClusterDecomposition, X) -> np.ndarray:
    """``sum_k alpha_k sigma^2_{lambda^k}(x)`` (alpha, not alpha squared)."""
    X = _rows(X)
    H = c.ensemble.outputs(X)
    out = np.zeros(X.shape[0])
    for a, idx, w in zip(c.alphas, c.members, c.sub_weights):
        out += a * _measure_variance(w, H[idx])
    return out


# ---------------------------------------------------------------- cluster search


def _sq_dists(P: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((P[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _weighted_kmeans(P, W, m, rng):
    """Weighted Lloyd iterations with k-means++ seeding.

    Returns (labels, inertia_trace).
    """
    U = P.shape[0]
    prob = W / W.sum()
    centers = [int(rng.choice(U, p=prob))]
    d2 = _sq_dists(P, P[centers]).min(axis=1)
    while len(centers) < m:
        score = W * d2
        if score.sum() <= 0:
            # Every point coincides with a center; take unused points in order.
            centers.append(next(i for i in range(U) if i not in centers))
        else:
            centers.append(int(rng.choice(U, p=score / score.sum())))
        d2 = np.minimum(d2, _sq_dists(P, P[centers[-1:]])[:, 0])
    C = P[centers].copy()
    labels = None
    trace = []
    for _ in range(KMEANS_MAX_ITER):
        D = _sq_dists(P, C)
        new = np.argmin(D, axis=1)
        for k in range(m):
            if not np.any(new == k):
                # Reseed an empty cluster at the point contributing most inertia.
                counts = np.bincount(new, minlength=m)
                contrib = np.where(counts[new] > 1, W * D[np.arange(U), new], -1.0)
                j = int(np.argmax(contrib))
                new[j] = k
                C[k] = P[j]
        for k in range(m):
            sel = new == k
            C[k] = (W[sel] @ P[sel]) / W[sel].sum()
        trace.append(float(W @ _sq_dists(P, C)[np.arange(U), new]))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return labels, trace


def search_clusters(f: ConvexEnsemble, data: Dataset, m: int, seed, restarts: int = N_RESTARTS) -> ClusterDecomposition:
    """Heuristic search for a low-variance hard partition with m clusters.

    Each stump is represented by its output profile on the sample; identical
    profiles are merged and clustered by weighted k-means (weights are the
    ensemble weights).  The restart with the smallest mean cluster variance
    is kept.  If m exceeds the number of distinct profiles, each profile
    becomes its own cluster and the result is flagged.
    """
    f = _as_conv(f)
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    H = f.outputs(data.features)
    uniq, inverse = np.unique(H, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    W = np.bincount(inverse, weights=f.weights, minlength=uniq.shape[0])
    U = uniq.shape[0]

    if m >= U:
        c = partition_decomposition(f, _first_seen_labels(inverse))
        c.flagged = m > U
        c.objective = float(np.mean(cluster_variances(c, data.features)))
        return c

    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        labels, trace = _weighted_kmeans(uniq, W, m, np.random.default_rng(child))
        c = partition_decomposition(f, _first_seen_labels(labels[inverse]))
        c.objective = float(np.mean(cluster_variances(c, data.features)))
        c.inertia_trace = trace
        if best is None or c.objective < best.objective:
            best = c
    return best


def _first_seen_labels(labels: np.ndarray) -> np.ndarray:
    # Relabel clusters 0..m-1 in order of first appearance along the terms.
    mapping = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


# ---------------------------------------------------------------- variance bounds


def variance_tail(values, gamma: float) -> float:
    """Fraction of values ``>= gamma``."""
    v = np.asarray(values, dtype=np.float64)
    if np.any(v < 0):
        raise ValidationError("variances must be nonnegative")
    return float(np.count_nonzero(v >= gamma)) / v.size


def cluster_threshold(m: int, gamma: float, delta: float, params: BoundParams) -> float:
    """``V m gamma / (n delta^2) * log^2(n / delta)``."""
    L = log_ratio(params.n, delta)
    return params.V * m * gamma / (params.n * delta * delta) * L * L


def cluster_count_detail(f, data, params: BoundParams, gamma, delta, seed, cache=None):
    """``(m, decomposition)``; m is ``m_max + 1`` and decomposition None if no m qualifies."""
    if not 0 < delta <= gamma:
        raise ValidationError(f"need 0 < delta <= gamma, got delta={delta}, gamma={gamma}")
    cache = {} if cache is None else cache
    for m in range(1, params.m_max + 1):
        if m not in cache:
            cache[m] = search_clusters(f, data, m, seed)
        c = cache[m]
        tail = variance_tail(cluster_variances(c, data.features), gamma)
        if tail <= cluster_threshold(m, gamma, delta, params):
            return m, c
    return params.m_max + 1, None


def cluster_count(f, data, params: BoundParams, gamma: float, delta: float, seed) -> int:
    """Upper estimate of the number of (gamma, delta)-clusters; ``m_max + 1`` means not found."""
    return cluster_count_detail(f, data, params, gamma, delta, seed)[0]


def _gamma_grid(delta: float) -> list[float]:
    gs = [g for g in (1.0,) + dyadic_grid(1, 60) if g >= delta]
    if delta not in gs:
        gs.append(delta)
    return gs


def variance_grid_terms(s2, m, pn, delta, gamma, params: BoundParams):
    """``(margin, complexity, confidence, tail)`` of the cluster bound at (delta, gamma)."""
    K = params.K
    tail = variance_tail(s2, gamma)
    comp = K * (tail + cluster_threshold(m, gamma, delta, params))
    return K * pn, comp, K * params.t / params.n, tail


def _variance_grid(s2, m, profile, params):
    rows = []
    for delta in params.delta_grid:
        pn = margin_cdf(profile, delta)
        inner = None
        for g in _gamma_grid(delta):
            mt, c, conf, tail = variance_grid_terms(s2, m, pn, delta, g, params)
            tot = mt + c + conf
            if inner is None or tot < inner[0]:
                inner = (tot, (mt, c, conf, g, tail))
        rows.append((delta, inner[0], inner[1]))
    return rows


def remark_gamma_hat(moment: float, p: float, delta: float, params: BoundParams) -> float:
    """Markov-optimized gamma ``(moment * n delta^2 / (V L^2))^(1/(p+1))``, capped at 1."""
    L = log_ratio(params.n, delta)
    return min(1.0, (moment * params.n * delta * delta / (params.V * L * L)) ** (1.0 / (p + 1)))


def remark_term(moment: float, p: float, delta: float, params: BoundParams) -> float:
    """``2 moment^(1/(p+1)) B^(p/(p+1)) ^ B`` with ``B = V L^2 / (n delta^2)``."""
    L = log_ratio(params.n, delta)
    B = params.V * L * L / (params.n * delta * delta)
    return min(2.0 * moment ** (1.0 / (p + 1)) * B ** (p / (p + 1.0)), B)


def remark_max_term(max_s2: float, delta: float, params: BoundParams) -> float:
    """``V max sigma^2 / (n delta^2) * L^2``, the limit of large p."""
    L = log_ratio(params.n, delta)
    return params.V * max_s2 / (params.n * delta * delta) * L * L


def _remark_branch(name, s2, profile, params, p):
    K = params.K
    rows = []
    if p == math.inf:
        cap = float(np.max(s2))
        for delta in params.delta_grid:
            if delta <= cap:
                c = K * remark_max_term(cap, delta, params)
                rows.append((delta, K * margin_cdf(profile, delta) + c + K * params.t / params.n,
                             (c, cap)))
    else:
        moment = float(np.mean(s2 ** p))
        for delta in params.delta_grid:
            g = remark_gamma_hat(moment, p, delta, params)
            if delta <= g:
                c = K * remark_term(moment, p, delta, params)
                rows.append((delta, K * margin_cdf(profile, delta) + c + K * params.t / params.n,
                             (c, g)))
    return rows


def bound_variance(f: ConvexEnsemble, data: Dataset, profile: MarginProfile, params: BoundParams) -> BoundReport:
    """Single-cluster variance bound.

    Evaluates the (delta, gamma) grid and, when the variance is not
    identically zero, the three Markov-optimized closed forms (p = 1,
    ``params.p_exponent`` and p = infinity).  The best is reported;
    ``details["branches"]`` holds all totals.
    """
    s2 = pointwise_variances(f, data.features)
    K, t, n = params.K, params.t, params.n
    grid_rows = _variance_grid(s2, 1, profile, params)
    candidates = []
    gd, gt, (mt, c, conf, g, tail) = _best(grid_rows)
    candidates.append(("grid", gt, gd, mt, c, conf, g))
    branches = {"grid": gt}
    notes = [CONSTANTS_NOTE, LOG_FLOOR_NOTE]
    if float(np.mean(s2)) > 0:
        for name, p in (("remark_p1", 1.0), ("remark_p", params.p_exponent), ("remark_pinf", math.inf)):
            rows = _remark_branch(name, s2, profile, params, p)
            if not rows:
                branches[name] = math.inf
                continue
            d, tot, (cterm, g) = _best(rows)
            branches[name] = tot
            candidates.append((name, tot, d, K * margin_cdf(profile, d), cterm, K * t / n, g))
    else:
        notes.append("variance vanishes on the sample; closed-form branches skipped")
    name, total, delta, mt, c, conf, g = min(candidates, key=lambda r: (r[1], r[2]))
    return BoundReport("variance", delta, mt, c, conf, total, chosen_gamma=g, chosen_m=1,
                       notes=notes,
                       details={"branch": name, "branches": branches,
                                "mean_variance": float(np.mean(s2)), "max_variance": float(np.max(s2))},
                       curve=[(d, tot) for d, tot, _ in sorted(grid_rows)])


def bound_cluster(f: ConvexEnsemble, data: Dataset, profile: MarginProfile, params: BoundParams, seed) -> BoundReport:
    """Cluster-variance bound minimized over m, the searched decomposition and (delta, gamma).

    The decompositions come from :func:`search_clusters`, so the result is an
    upper estimate of the infimum over all decompositions.
    """
    f = _as_conv(f)
    per_m = {}
    cache = {}
    best = None
    for m in range(1, min(params.m_max, f.T) + 1):
        c = search_clusters(f, data, m, seed)
        cache[m] = c
        if c.m < m:
            continue
        rows = _variance_grid(cluster_variances(c, data.features), m, profile, params)
        d, tot, terms = _best(rows)
        per_m[m] = tot
        if best is None or tot < best[1]:
            best = (m, tot, d, terms, rows)
    m, total, delta, (mt, cterm, conf, g, tail), rows = best
    m_hat, _ = cluster_count_detail(f, data, params, delta, delta, seed, cache)
    L = log_ratio(params.n, delta)
    details = {
        "per_m_totals": {str(k): v for k, v in per_m.items()},
        "objective": cache[m].objective,
        "variance_tail": tail,
        "m_hat_upper": m_hat,
        "headline_error_term": m_hat / (params.n * delta) * L * L,
    }
    return BoundReport("cluster", delta, mt, cterm, conf, total, chosen_gamma=g, chosen_m=m,
                       notes=[CONSTANTS_NOTE, LOG_FLOOR_NOTE,
                              "hard-partition search; cluster counts are upper estimates"],
                       details=details, curve=[(dl, tot) for dl, tot, _ in sorted(rows)])
