"""Empirical margin distributions and ramp losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import ConvexEnsemble, Dataset, dyadic_grid
from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class MarginProfile:
    """Sorted margins ``y_i f(X_i)`` of a classifier on a sample."""

    sorted_margins: np.ndarray

    def __post_init__(self):
        m = np.sort(np.asarray(self.sorted_margins, dtype=np.float64).ravel())
        if m.size == 0:
            raise ValidationError("margin profile needs at least one margin")
        if m[0] < -1.0 or m[-1] > 1.0:
            raise ValidationError("margins must lie in [-1, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "sorted_margins", m)

    @property
    def n(self) -> int:
        return self.sorted_margins.size

    def cdf(self, delta) -> float:
        return margin_cdf(self, delta)


def margin_profile(f: ConvexEnsemble, data: Dataset) -> MarginProfile:
    m = data.labels * f.decision_function(data.features)
    # Round-off can push a full-agreement sum a hair past 1.
    return MarginProfile(np.clip(m, -1.0, 1.0))


def margin_cdf(profile: MarginProfile, delta: float) -> float:
    """``P_n(yf <= delta)`` with the closed inequality."""
    k = np.searchsorted(profile.sorted_margins, delta, side="right")
    return float(k) / profile.n


def min_margin(profile: MarginProfile) -> float:
    """Smallest training margin; for delta below it the margin CDF vanishes."""
    return float(profile.sorted_margins[0])


def zero_error_threshold(profile: MarginProfile, grid=None):
    """Largest grid delta with ``P_n(yf <= delta) == 0``, or None if there is none."""
    grid = dyadic_grid() if grid is None else grid
    ok = [d for d in grid if margin_cdf(profile, d) == 0.0]
    return max(ok) if ok else None


@dataclass(frozen=True)
class RampLoss:
    """Piecewise-linear loss equal to 1 below ``lo`` and 0 above ``hi`` (or mirrored)."""

    lo: float
    hi: float
    orientation: str = "decreasing"

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValidationError(f"ramp needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.orientation not in ("decreasing", "increasing"):
            raise ValidationError(f"unknown orientation {self.orientation!r}")

    @property
    def lipschitz(self) -> float:
        return 1.0 / (self.hi - self.lo)

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        up = np.clip((s - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return 1.0 - up if self.orientation == "decreasing" else up


def ramp_mean_profile(profile: MarginProfile, ramp: RampLoss) -> float:
    return math.fsum(ramp(profile.sorted_margins)) / profile.n


def ramp_mean(f: ConvexEnsemble, data: Dataset, ramp: RampLoss) -> float:
    """Empirical mean of the ramp loss applied to the margins."""
    return ramp_mean_profile(margin_profile(f, data), ramp)


def test_error(f: ConvexEnsemble, holdout: Dataset) -> float:
    """Fraction of holdout rows with margin <= 0 (no-decision counts as an error)."""
    return margin_cdf(margin_profile(f, holdout), 0.0)


# Keep pytest from collecting the function above when imported into a test module.
test_error.__test__ = False


def linear_grid(step: float) -> tuple[float, ...]:
    """``(1, 1 - step, ...)`` down to the last positive value."""
    if not 0.0 < step <= 1.0:
        raise ValidationError(f"grid step must lie in (0, 1], got {step}")
    k = int(math.floor(1.0 / step + 1e-9))
    return tuple(1.0 - i * step for i in range(k) if 1.0 - i * step > 0.0)


def parse_grid(spec: str) -> tuple[float, ...]:
    """Parse ``dyadic``, ``dyadic:<kmax>`` or ``linear:<step>``."""
    if spec == "dyadic":
        return dyadic_grid()
    kind, _, arg = spec.partition(":")
    try:
        if kind == "dyadic":
            return dyadic_grid(1, int(arg))
        if kind == "linear":
            return linear_grid(float(arg))
    except ValueError as exc:
        raise ValidationError(f"bad grid {spec!r}: {exc}") from exc
    raise ValidationError(f"unknown grid {spec!r}; use dyadic, dyadic:<k> or linear:<step>")


def margin_curve(profile: MarginProfile, grid) -> list[tuple[float, float]]:
    return [(float(d), margin_cdf(profile, d)) for d in sorted(grid)]
