"""Samples, decision stumps and (signed) convex combinations of stumps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateEnsembleError, StructuralError, ValidationError

# Slack allowed on weight-sum constraints for floating point round-off.
WEIGHT_TOL = 1e-9


def dyadic_grid(k_min: int = 1, k_max: int = 16) -> tuple[float, ...]:
    """Return ``(2**-k_min, ..., 2**-k_max)`` in decreasing order."""
    if k_min < 0 or k_max < k_min:
        raise ValidationError(f"invalid dyadic range [{k_min}, {k_max}]")
    return tuple(2.0 ** -k for k in range(k_min, k_max + 1))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (n x p) with labels in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.float64, copy=True).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValidationError("features must be a 2-D array")
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValidationError(f"dataset needs n >= 1 and p >= 1, got {X.shape}")
        if y.shape[0] != n:
            raise ValidationError(f"{y.shape[0]} labels for {n} rows")
        if not np.all(np.isfinite(X)):
            raise ValidationError("features must be finite")
        bad = ~((y == 1.0) | (y == -1.0))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"label at row {i} is {y[i]!r}, expected -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx])

    def __len__(self):
        return self.n


@dataclass(frozen=True, order=True)
class Stump:
    """Axis-aligned decision stump.

    Evaluates to ``polarity`` where ``x[feature] > threshold`` and to
    ``-polarity`` otherwise.  Thresholds of +-inf give the two constant
    classifiers.  Field order doubles as the lexicographic tie-break order.
    """

    feature: int
    threshold: float
    polarity: int

    def __post_init__(self):
        if int(self.feature) != self.feature or self.feature < 0:
            raise ValidationError(f"feature index must be a nonnegative integer, got {self.feature!r}")
        if self.polarity not in (-1, 1):
            raise ValidationError(f"polarity must be -1 or +1, got {self.polarity!r}")
        if math.isnan(self.threshold):
            raise ValidationError("threshold must not be NaN")
        object.__setattr__(self, "feature", int(self.feature))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "polarity", int(self.polarity))

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if self.feature >= X.shape[1]:
            raise StructuralError(
                f"stump uses feature {self.feature} but rows have {X.shape[1]} features"
            )
        return np.where(X[:, self.feature] > self.threshold, float(self.polarity), -float(self.polarity))

    def __call__(self, x) -> float:
        return float(self.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])

    def negated(self) -> "Stump":
        return Stump(self.feature, self.threshold, -self.polarity)


def _exact_suffix_sums(values: Sequence[float]) -> np.ndarray:
    # Exact rational accumulation, rounded once: suffix[d] = sum(values[d:]).
    out = np.zeros(len(values) + 1)
    acc = Fraction(0)
    for d in range(len(values) - 1, -1, -1):
        acc += Fraction(values[d])
        out[d] = float(acc)
    return out


@dataclass(frozen=True, eq=False)
class ConvexEnsemble:
    """``f = sum_k weight_k * stump_k``.

    ``mode="conv"`` requires nonnegative weights summing to at most one;
    ``mode="sconv"`` allows signed weights with absolute sum at most one.
    Use :func:`normalize` to merge duplicates, rescale and sort.
    """

    terms: tuple
    mode: str = "conv"

    def __post_init__(self):
        terms = tuple((float(w), h) for w, h in self.terms)
        if self.mode not in ("conv", "sconv"):
            raise ValidationError(f"mode must be 'conv' or 'sconv', got {self.mode!r}")
        for w, h in terms:
            if not isinstance(h, Stump):
                raise ValidationError(f"terms must hold Stump hypotheses, got {type(h).__name__}")
            if not math.isfinite(w):
                raise ValidationError("weights must be finite")
            if self.mode == "conv" and w < 0:
                raise ValidationError(f"conv ensemble has negative weight {w}")
        total = math.fsum(abs(w) for w, _ in terms)
        if total > 1.0 + WEIGHT_TOL:
            raise ValidationError(f"total absolute weight {total} exceeds 1")
        object.__setattr__(self, "terms", terms)

    @property
    def T(self) -> int:
        return len(self.terms)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.array([w for w, _ in self.terms], dtype=np.float64)
        w.setflags(write=False)
        return w

    @property
    def stumps(self) -> tuple:
        return tuple(h for _, h in self.terms)

    @cached_property
    def tail_weights(self) -> np.ndarray:
        """``tail_weights[d]`` is the absolute weight beyond the d largest terms (d = 0..T)."""
        t = _exact_suffix_sums(sorted((abs(w) for w, _ in self.terms), reverse=True))
        # Hull members carry mass at most 1; normalized weights can sum to 1 + ulp.
        t = np.minimum(t, 1.0)
        t.setflags(write=False)
        return t

    def outputs(self, X) -> np.ndarray:
        """T x n matrix of stump outputs at the rows of X."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if self.T == 0:
            return np.zeros((0, X.shape[0]))
        return np.vstack([h.predict(X) for h in self.stumps])

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if self.T == 0:
            return np.zeros(X.shape[0])
        return self.weights @ self.outputs(X)

    def fold_signs(self) -> "ConvexEnsemble":
        """Move negative weights into stump polarity, giving a conv ensemble."""
        terms = [(abs(w), h.negated() if w < 0 else h) for w, h in self.terms]
        return ConvexEnsemble(tuple(terms), mode="conv")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "terms": [
                {"weight": w, "feature": h.feature, "threshold": h.threshold, "polarity": h.polarity}
                for w, h in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConvexEnsemble":
        try:
            mode = doc.get("mode", "conv")
            terms = tuple(
                (float(t["weight"]), Stump(int(t["feature"]), float(t["threshold"]), int(t["polarity"])))
                for t in doc["terms"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed ensemble document: {exc}") from exc
        return cls(terms, mode=mode)


def evaluate_ensemble(f: ConvexEnsemble, x) -> float:
    """Value ``sum_k lambda_k h_k(x)`` at a single feature row."""
    return float(f.decision_function(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def margin(f: ConvexEnsemble, x, y) -> float:
    if y not in (-1, 1):
        raise ValidationError(f"label must be -1 or +1, got {y!r}")
    return float(y) * evaluate_ensemble(f, x)


def normalize(f: ConvexEnsemble) -> ConvexEnsemble:
    """Merge duplicate stumps, rescale to unit absolute mass, sort by decreasing |weight|.

    Zero-weight terms are dropped.  The sort is stable, so an already
    normalized ensemble is returned unchanged.
    """
    merged: dict[Stump, float] = {}
    for w, h in f.terms:
        merged[h] = merged.get(h, 0.0) + w
    items = [(w, h) for h, w in merged.items() if w != 0.0]
    total = math.fsum(abs(w) for w, _ in items)
    if total <= 0.0:
        raise DegenerateEnsembleError("cannot normalize an ensemble with zero total weight")
    if abs(total - 1.0) > 1e-12:
        items = [(w / total, h) for w, h in items]
    items.sort(key=lambda item: -abs(item[0]))
    return ConvexEnsemble(tuple(items), mode=f.mode)


def tail_weight(f: ConvexEnsemble, d: int) -> float:
    """Absolute weight carried by the terms after the d largest."""
    if d < 0:
        raise ValidationError(f"d must be >= 0, got {d}")
    return float(f.tail_weights[min(int(d), f.T)])


def ensemble_from_pairs(pairs: Iterable, mode: str = "conv") -> ConvexEnsemble:
    """Build and normalize an ensemble from ``(weight, stump)`` pairs of any total mass."""
    pairs = [(float(w), h) for w, h in pairs]
    total = math.fsum(abs(w) for w, _ in pairs)
    if total <= 0.0:
        raise DegenerateEnsembleError("all weights are zero")
    return normalize(ConvexEnsemble(tuple((w / total, h) for w, h in pairs), mode=mode))


def save_ensemble(f: ConvexEnsemble, path) -> None:
    with open(path, "w") as fh:
        json.dump(f.to_dict(), fh, indent=2)
        fh.write("\n")


def load_ensemble(path) -> ConvexEnsemble:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a valid ensemble document ({exc})") from exc
    return ConvexEnsemble.from_dict(doc)


@dataclass(frozen=True)
class BoundParams:
    """Parameters shared by the bound evaluators.

    ``K`` stands in for the unspecified absolute constants of the bounds and
    ``t`` is the confidence exponent (bounds hold with probability 1 - e^-t).
    """

    n: int
    V: float = 2.0
    t: float = 3.0
    K: float = 1.0
    delta_grid: tuple = field(default_factory=dyadic_grid)
    p_exponent: float = 1.0
    m_max: int = 8

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if not self.V > 0:
            raise ValidationError(f"V must be > 0, got {self.V}")
        if self.t < 0:
            raise ValidationError(f"t must be >= 0, got {self.t}")
        if self.K < 0:
            raise ValidationError(f"K must be >= 0, got {self.K}")
        grid = tuple(float(d) for d in self.delta_grid)
        if not grid or any(not (0.0 < d <= 1.0) for d in grid):
            raise ValidationError("delta_grid must be nonempty with entries in (0, 1]")
        if self.p_exponent < 1:
            raise ValidationError(f"p_exponent must be >= 1, got {self.p_exponent}")
        if self.m_max < 1:
            raise ValidationError(f"m_max must be >= 1, got {self.m_max}")
        object.__setattr__(self, "delta_grid", tuple(sorted(set(grid), reverse=True)))

    @property
    def alpha(self) -> float:
        return 2.0 * self.V / (self.V + 2.0)
