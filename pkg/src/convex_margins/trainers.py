"""AdaBoost and bagging over decision stumps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import ConvexEnsemble, Dataset, Stump, normalize
from .errors import ValidationError

# Errors closer than this to the minimum are treated as ties.
TIE_TOL = 1e-12


def _stump_error(stump: Stump, data: Dataset, weights: np.ndarray) -> float:
    wrong = stump.predict(data.features) != data.labels
    return math.fsum(weights[wrong])


def _thresholds(values: np.ndarray) -> np.ndarray:
    """-inf, midpoints between consecutive distinct values, +inf."""
    u = np.unique(values)
    lo, hi = u[:-1], u[1:]
    mid = lo + (hi - lo) / 2.0
    # A midpoint that rounds up onto the larger value would put it on the wrong side.
    mid = np.where(mid >= hi, lo, mid)
    return np.concatenate(([-np.inf], mid, [np.inf]))


def _check_weights(data: Dataset, weights) -> np.ndarray:
    if weights is None:
        return np.full(data.n, 1.0 / data.n)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != data.n:
        raise ValidationError(f"{w.shape[0]} weights for {data.n} rows")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("example weights must be finite and nonnegative")
    if abs(math.fsum(w) - 1.0) > 1e-9:
        raise ValidationError(f"example weights sum to {math.fsum(w)}, expected 1")
    return w


def best_stump(data: Dataset, weights=None) -> tuple[Stump, float]:
    """Stump minimizing the weighted 0-1 error.

    Scans every feature, every threshold in ``-inf``, midpoints, ``+inf``,
    and both polarities.  Ties (within ``TIE_TOL``) go to the
    lexicographically smallest ``(feature, threshold, polarity)``.

    Returns
    -------
    stump, error : the winning stump and its weighted error, recomputed
        directly rather than read off the running sums.
    """
    if data is None or data.n == 0:
        raise ValidationError("best_stump needs a nonempty dataset")
    w = _check_weights(data, weights)
    y = data.labels
    w_pos = np.where(y > 0, w, 0.0)
    w_neg = np.where(y < 0, w, 0.0)
    total_neg = w_neg.sum()

    candidates = []  # (error, feature, threshold, polarity)
    for j in range(data.p):
        x = data.features[:, j]
        thr = _thresholds(x)
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cum_pos = np.concatenate(([0.0], np.cumsum(w_pos[order])))
        cum_neg = np.concatenate(([0.0], np.cumsum(w_neg[order])))
        # Number of rows with x <= threshold, for each candidate threshold.
        k = np.searchsorted(xs, thr, side="right")
        # Polarity +1 predicts +1 above the threshold: errs on positives below, negatives above.
        err_plus = cum_pos[k] + (total_neg - cum_neg[k])
        err_minus = w.sum() - err_plus
        for pol, err in ((1, err_plus), (-1, err_minus)):
            for t, e in zip(thr, err):
                candidates.append((float(e), j, float(t), pol))

    best = min(c[0] for c in candidates)
    tied = [Stump(j, t, pol) for e, j, t, pol in candidates if e <= best + TIE_TOL]
    winner = min(tied)
    return winner, _stump_error(winner, data, w)


@dataclass
class AdaBoostState:
    """Trace of an AdaBoost run.

    ``weights_history[k]`` holds the example weights used in round k (the
    final entry is the distribution after the last update);
    ``history[k]`` is ``(e_k, alpha_k, stump_k)``.
    """

    example_weights: np.ndarray
    round: int = 0
    history: list = field(default_factory=list)
    weights_history: list = field(default_factory=list)
    stopped: str = ""


def adaboost_alpha(e: float) -> float:
    """Vote ``0.5 * log((1 - e) / e)`` for a weak hypothesis with weighted error e."""
    if not 0.0 <= e <= 1.0:
        raise ValidationError(f"weighted error must lie in [0, 1], got {e}")
    if e == 0.0:
        return math.inf
    if e >= 0.5:
        return 0.0
    return 0.5 * math.log((1.0 - e) / e)


def adaboost_trace(data: Dataset, rounds: int) -> AdaBoostState:
    """Run AdaBoost for up to ``rounds`` rounds and keep the full trace."""
    if rounds < 1:
        raise ValidationError(f"rounds must be >= 1, got {rounds}")
    w = np.full(data.n, 1.0 / data.n)
    state = AdaBoostState(example_weights=w.copy())
    state.weights_history.append(w.copy())
    y = data.labels
    for k in range(rounds):
        stump, e = best_stump(data, w)
        alpha = adaboost_alpha(e)
        state.history.append((e, alpha, stump))
        state.round = k + 1
        if math.isinf(alpha):
            state.stopped = "perfect"
            break
        if alpha == 0.0:
            state.stopped = "no-progress"
            break
        w = w * np.exp(-alpha * y * stump.predict(data.features))
        w = w / math.fsum(w)
        state.example_weights = w.copy()
        state.weights_history.append(w.copy())
    return state


def ensemble_from_trace(state: AdaBoostState) -> ConvexEnsemble:
    """Convert a trace to ``lambda_k = alpha_k / sum_j alpha_j``.

    A perfect round (infinite vote) takes all the mass.  If every vote is
    zero, the first stump is returned with weight one.
    """
    if not state.history:
        raise ValidationError("empty AdaBoost trace")
    last_e, last_alpha, last_stump = state.history[-1]
    if math.isinf(last_alpha):
        return ConvexEnsemble(((1.0, last_stump),))
    alphas = [a for _, a, _ in state.history]
    total = math.fsum(alphas)
    if total == 0.0:
        return ConvexEnsemble(((1.0, state.history[0][2]),))
    terms = tuple((a / total, h) for (_, a, h) in state.history if a > 0.0)
    return normalize(ConvexEnsemble(terms))


def adaboost(data: Dataset, rounds: int) -> ConvexEnsemble:
    """AdaBoost with exhaustive stump search; deterministic in (data, rounds)."""
    return ensemble_from_trace(adaboost_trace(data, rounds))


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def bootstrap_sample(data: Dataset, seed) -> Dataset:
    """n rows drawn uniformly with replacement."""
    rng = _as_generator(seed)
    idx = rng.integers(0, data.n, size=data.n)
    return data.subset(idx)


def bagging(data: Dataset, rounds: int, seed) -> ConvexEnsemble:
    """Equal-weight vote of stumps fit to ``rounds`` bootstrap resamples."""
    if rounds < 1:
        raise ValidationError(f"rounds must be >= 1, got {rounds}")
    rng = _as_generator(seed)
    terms = []
    for _ in range(rounds):
        stump, _err = best_stump(bootstrap_sample(data, rng))
        terms.append((1.0 / rounds, stump))
    return normalize(ConvexEnsemble(tuple(terms)))
