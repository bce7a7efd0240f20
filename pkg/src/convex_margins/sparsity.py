"""Sparsity measures of convex combinations and margin-bound evaluators built on them.

Every evaluator returns a :class:`BoundReport` whose total can be rebuilt
from the reported terms with :meth:`BoundReport.recompute`.  All logarithms
are natural, and ``log(n / delta)`` is floored at 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .ensemble import BoundParams, ConvexEnsemble
from .errors import ConvergenceError, ValidationError
from .margins import MarginProfile, RampLoss, margin_cdf, min_margin, ramp_mean_profile

MAX_ITER = 10_000

CLASSIC_KINDS = ("schapire_2_1", "kp_nolog", "zero_error_2_4", "linfty_2_7", "breiman_2_11")

CONSTANTS_NOTE = "K and t are user-supplied stand-ins; compare totals by shape, not absolute level"
LOG_FLOOR_NOTE = "log(n/delta) floored at 1"


@dataclass
class BoundReport:
    """Term-by-term breakdown of one bound at its optimizing parameters.

    ``combine`` says how the terms give the total:

    * ``"sum"``: margin + complexity + confidence
    * ``"sparsity"``: ``(sqrt(U) + sqrt(margin + U))**2`` with U = complexity + confidence
    * ``"concave"``: largest root of ``y = margin + (complexity + confidence) sqrt(y) + v y**beta``
      with ``v`` and ``beta`` stored in ``details``
    """

    bound_name: str
    chosen_delta: float
    margin_term: float
    complexity_term: float
    confidence_term: float
    total: float
    combine: str = "sum"
    chosen_gamma: Optional[float] = None
    chosen_d: Optional[int] = None
    chosen_m: Optional[int] = None
    valid: bool = True
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)

    def recompute(self) -> float:
        """Rebuild the total from the reported parts."""
        if not math.isfinite(self.total):
            return self.total
        if self.combine == "sum":
            return self.margin_term + self.complexity_term + self.confidence_term
        if self.combine == "sparsity":
            return sparsity_total(self.margin_term, self.complexity_term + self.confidence_term)
        if self.combine == "concave":
            return solve_concave(
                self.margin_term,
                self.complexity_term + self.confidence_term,
                self.details["v"],
                self.details["beta"],
            )
        raise ValidationError(f"unknown combine rule {self.combine!r}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["curve"] = [list(p) for p in self.curve]
        return doc


def log_ratio(n: float, delta: float) -> float:
    """``max(1, log(n / delta))``."""
    return max(1.0, math.log(n / delta))


def _best(rows):
    """Pick the row with smallest total; ties go to the smaller delta.

    Rows are ``(delta, total, payload)``.
    """
    best = None
    for row in sorted(rows, key=lambda r: r[0]):
        if best is None or row[1] < best[1]:
            best = row
    return best


# ---------------------------------------------------------------- sparsity measures


def gamma_dimension(f: ConvexEnsemble, gamma: float) -> int:
    """Smallest d whose tail beyond the d largest |weights| is at most gamma."""
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    if gamma >= 1.0:
        # Total mass is at most 1 up to rounding, so the empty head always suffices.
        return 0
    tails = f.tail_weights
    return int(np.argmax(tails <= gamma))


def effective_dimension_argmin(f: ConvexEnsemble, delta: float, n: float) -> tuple[float, int]:
    """``min_d (d + 2 gamma_d^2 / delta^2 * log n)`` and the smallest minimizing d."""
    if not delta > 0:
        raise ValidationError(f"delta must be > 0, got {delta}")
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    g = f.tail_weights
    d = np.arange(g.size, dtype=np.float64)
    vals = d + 2.0 * g * g / (delta * delta) * math.log(n)
    k = int(np.argmin(vals))
    return float(vals[k]), k


def effective_dimension(f: ConvexEnsemble, delta: float, n: float) -> float:
    return effective_dimension_argmin(f, delta, n)[0]


# ---------------------------------------------------------------- inequality solvers


def phi(a: float, b: float) -> float:
    """``(a - b)^2 / a`` for ``a >= b``, else 0."""
    if a < b or a <= 0:
        return 0.0
    return (a - b) ** 2 / a


def solve_phi(b: float, c: float, relaxed: bool = False) -> float:
    """Largest a with ``phi(a, b) <= c``.

    The exact root is ``b + c/2 + sqrt(b c + c^2/4)``; ``relaxed=True``
    returns the simpler upper bound ``(sqrt(c) + sqrt(b + c))^2``.
    """
    if b < 0 or c < 0:
        raise ValidationError(f"solve_phi needs b, c >= 0, got b={b}, c={c}")
    if relaxed:
        return (math.sqrt(c) + math.sqrt(b + c)) ** 2
    return b + (c / 2.0 + math.sqrt(b * c + c * c / 4.0))


def sparsity_total(margin: float, U: float) -> float:
    return (math.sqrt(U) + math.sqrt(margin + U)) ** 2


def solve_concave(x: float, a: float, b: float, beta: float) -> float:
    """Largest root of ``y = x + a sqrt(y) + b y^beta``.

    ``h(y) = y - x - a sqrt(y) - b y^beta`` is convex, so Newton's method
    started to the right of the root decreases monotonically onto it.
    """
    if x < 0 or a < 0 or b < 0:
        raise ValidationError(f"solve_concave needs x, a, b >= 0, got {x}, {a}, {b}")
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    if a == 0.0 and b == 0.0:
        return float(x)

    def h(y):
        return y - x - a * math.sqrt(y) - b * y ** beta

    y = max(1.0, x + a + b)
    while h(y) < 0.0:
        y *= 2.0
        if math.isinf(y):
            raise ConvergenceError("solve_concave: could not bracket the root")
    for _ in range(MAX_ITER):
        hy = h(y)
        if hy <= 0.0:
            return y
        dh = 1.0 - a / (2.0 * math.sqrt(y)) - b * beta * y ** (beta - 1.0)
        if dh > 0.0:
            y_new = y - hy / dh
        else:
            y_new = x + a * math.sqrt(y) + b * y ** beta
        if not y_new < y:
            return y
        if y - y_new <= 4.0 * np.finfo(float).eps * y:
            return max(y_new, 0.0)
        y = y_new
    raise ConvergenceError(f"solve_concave did not converge in {MAX_ITER} iterations")


# ---------------------------------------------------------------- classic bounds


def classic_terms(kind: str, pn: float, delta: float, params: BoundParams, extra=None):
    """``(margin, complexity, confidence)`` of a classic bound at one delta.

    ``pn`` is the empirical margin fraction ``P_n(yf <= delta)``.
    """
    extra = extra or {}
    n, V, t, K = params.n, params.V, params.t, params.K
    if kind == "schapire_2_1":
        L = log_ratio(n, delta)
        return pn, K * math.sqrt(V * L * L / (n * delta * delta)), K * math.sqrt(t / n)
    if kind == "kp_nolog":
        return pn, K * math.sqrt(V / (n * delta * delta)), K * math.sqrt(t / n)
    if kind == "zero_error_2_4":
        al = params.alpha
        return K * pn, K * ((1.0 / delta) ** (2 * al / (2 + al)) * n ** (-2.0 / (al + 2))), K * t / n
    if kind == "linfty_2_7":
        n_inf = extra.get("n_infty")
        if n_inf is None or n_inf < 1:
            raise ValidationError("linfty_2_7 needs extra['n_infty'] >= 1")
        return K * pn, K * math.log(n_inf) / n, K * t / n
    if kind == "breiman_2_11":
        N = extra.get("N")
        if N is None or N < 1:
            raise ValidationError("breiman_2_11 needs extra['N'] >= 1")
        return 0.0, K * math.log(N) / (n * delta * delta), K * t / n
    raise ValidationError(f"unknown classic bound {kind!r}; choose from {CLASSIC_KINDS}")


def classic_bound(kind: str, profile: MarginProfile, params: BoundParams, extra=None) -> BoundReport:
    """Evaluate a classic margin bound, minimized over ``params.delta_grid``.

    ``extra`` carries ``n_infty`` for ``linfty_2_7`` and ``N`` (base class
    size or stand-in) for ``breiman_2_11``, which is evaluated at the
    minimum margin instead of over the grid.
    """
    extra = extra or {}
    notes = [CONSTANTS_NOTE]
    if kind == "breiman_2_11":
        ds = min_margin(profile)
        N = extra.get("N")
        if N is None or N < 1:
            raise ValidationError("breiman_2_11 needs extra['N'] >= 1")
        need = math.sqrt(32.0 / N)
        valid = ds >= need
        if not valid:
            notes.append(f"minimum margin {ds:.6g} below sqrt(32/N) = {need:.6g}")
        if ds <= 0:
            return BoundReport(kind, ds, 0.0, math.inf, params.K * params.t / params.n, math.inf,
                               valid=False, notes=notes, details={"N": N})
        m, c, conf = classic_terms(kind, 0.0, ds, params, extra)
        return BoundReport(kind, ds, m, c, conf, m + c + conf, valid=valid, notes=notes,
                           details={"N": N}, curve=[(ds, m + c + conf)])
    if kind not in CLASSIC_KINDS:
        raise ValidationError(f"unknown classic bound {kind!r}; choose from {CLASSIC_KINDS}")
    rows = []
    for delta in params.delta_grid:
        m, c, conf = classic_terms(kind, margin_cdf(profile, delta), delta, params, extra)
        rows.append((delta, m + c + conf, (m, c, conf)))
    delta, total, (m, c, conf) = _best(rows)
    if kind == "schapire_2_1":
        notes.append(LOG_FLOOR_NOTE)
    if kind == "linfty_2_7":
        notes.append("expected L-infinity covering number replaced by the observed-sample value")
    return BoundReport(kind, delta, m, c, conf, total, notes=notes, details=dict(extra),
                       curve=[(d, tot) for d, tot, _ in sorted(rows)])


# ---------------------------------------------------------------- gamma-dimension bounds


def _gamma_candidates(f: ConvexEnsemble, params: BoundParams) -> np.ndarray:
    # d(f; gamma) only changes at tail weights; dyadic values are included for reporting.
    cands = set(float(g) for g in f.tail_weights) | set(params.delta_grid) | {1.0}
    return np.array(sorted(g for g in cands if 0.0 <= g <= 1.0))


def gamma_dim_terms(f, pn, delta, gamma, params: BoundParams):
    """``(margin, complexity, confidence, d)`` of the gamma-dimension bound at (delta, gamma)."""
    n, t, K, al = params.n, params.t, params.K, params.alpha
    d = gamma_dimension(f, gamma)
    L = log_ratio(n, delta)
    comp = K * (d / n * L + (gamma / delta) ** (2 * al / (2 + al)) * n ** (-2.0 / (al + 2)))
    return K * pn, comp, K * t / n, d


def bound_gamma_dim(f: ConvexEnsemble, profile: MarginProfile, params: BoundParams) -> BoundReport:
    """Gamma-dimension margin bound, exact over tail-weight breakpoints."""
    gammas = _gamma_candidates(f, params)
    rows = []
    for delta in params.delta_grid:
        pn = margin_cdf(profile, delta)
        inner = None
        for g in gammas:
            m, c, conf, d = gamma_dim_terms(f, pn, delta, g, params)
            tot = m + c + conf
            if inner is None or tot < inner[0]:
                inner = (tot, (m, c, conf, float(g), d))
        rows.append((delta, inner[0], inner[1]))
    delta, total, (m, c, conf, g, d) = _best(rows)
    return BoundReport("gamma_dim", delta, m, c, conf, total, chosen_gamma=g, chosen_d=d,
                       notes=[CONSTANTS_NOTE, LOG_FLOOR_NOTE],
                       curve=[(dl, tot) for dl, tot, _ in sorted(rows)])


def theorem1_coefficients(f, delta, gamma, params: BoundParams):
    """``(u_complexity, u_confidence, v, beta, d)`` of the ratio-type sparsity bound."""
    n, t, K, al = params.n, params.t, params.K, params.alpha
    d = gamma_dimension(f, gamma)
    u_c = K * math.sqrt(d / n * log_ratio(n, delta))
    u_t = K * math.sqrt(t / n)
    v = K * (gamma / delta) ** (al / 2.0) / math.sqrt(n)
    return u_c, u_t, v, 0.5 - al / 4.0, d


def theorem1_bound(f: ConvexEnsemble, data, params: BoundParams, profile=None) -> BoundReport:
    """Ratio-type sparsity bound solved for the true ramp risk.

    For each delta the empirical ramp risk b on ``[0, delta]`` is computed,
    and for each gamma breakpoint ``y = b + u sqrt(y) + v y^beta`` is solved
    for its largest root; the smallest root over (delta, gamma) is reported.
    """
    if profile is None:
        from .margins import margin_profile

        profile = margin_profile(f, data)
    gammas = _gamma_candidates(f, params)
    rows = []
    for delta in params.delta_grid:
        b = ramp_mean_profile(profile, RampLoss(0.0, delta))
        inner = None
        seen = set()
        for g in gammas:
            u_c, u_t, v, beta, d = theorem1_coefficients(f, delta, g, params)
            if (d, v) in seen:
                continue
            seen.add((d, v))
            rho = solve_concave(b, u_c + u_t, v, beta)
            if inner is None or rho < inner[0]:
                inner = (rho, (b, u_c, u_t, v, beta, float(g), d))
        rows.append((delta, inner[0], inner[1]))
    delta, total, (b, u_c, u_t, v, beta, g, d) = _best(rows)
    return BoundReport("theorem1", delta, b, u_c, u_t, total, combine="concave",
                       chosen_gamma=g, chosen_d=d,
                       notes=[CONSTANTS_NOTE, LOG_FLOOR_NOTE, "margin_term is the empirical ramp risk"],
                       details={"v": v, "beta": beta},
                       curve=[(dl, tot) for dl, tot, _ in sorted(rows)])


# ---------------------------------------------------------------- sparsity (effective dimension) bound


def sparsity_terms(f, pn, delta, params: BoundParams):
    """``(margin, complexity, confidence, e_n, d)``; U = complexity + confidence."""
    n, V, t, K = params.n, params.V, params.t, params.K
    e, d = effective_dimension_argmin(f, delta, n)
    return pn, K * V * e / n * log_ratio(n, delta), K * t / n, e, d


def bound_sparsity(f: ConvexEnsemble, profile: MarginProfile, params: BoundParams,
                   eps: float = 1.0) -> BoundReport:
    """Effective-dimension bound ``inf_delta (sqrt(U) + sqrt(P_n + U))^2``.

    ``details["explicit"]`` holds ``(1 + eps) P_n + (2 + 1/eps) U`` at the
    chosen delta.  That form is only an upper bound after enlarging K;
    ``details["explicit_upper"]`` is ``(1 + eps) P_n + (2 + eps + 1/eps) U``,
    which dominates the total for the same K.
    """
    if eps <= 0:
        raise ValidationError(f"eps must be > 0, got {eps}")
    rows = []
    for delta in params.delta_grid:
        m, c, conf, e, d = sparsity_terms(f, margin_cdf(profile, delta), delta, params)
        rows.append((delta, sparsity_total(m, c + conf), (m, c, conf, e, d)))
    delta, total, (m, c, conf, e, d) = _best(rows)
    U = c + conf
    return BoundReport("sparsity", delta, m, c, conf, total, combine="sparsity", chosen_d=d,
                       notes=[CONSTANTS_NOTE, LOG_FLOOR_NOTE],
                       details={"effective_dimension": e, "explicit": (1 + eps) * m + (2 + 1 / eps) * U,
                                "explicit_upper": (1 + eps) * m + (2 + eps + 1 / eps) * U, "eps": eps},
                       curve=[(dl, tot) for dl, tot, _ in sorted(rows)])


def example_rate_terms(kind: str, beta: float, delta: float, params: BoundParams):
    """``(complexity, confidence)`` of the closed-form zero-error rates."""
    n, V, t, K = params.n, params.V, params.t, params.K
    L = log_ratio(n, delta)
    if kind == "polynomial":
        if beta <= 1:
            raise ValidationError(f"polynomial decay needs beta > 1, got {beta}")
        return K * V / (n * delta ** (2.0 / (2 * beta - 1))) * L * L, K * t / n
    if kind == "exponential":
        return K * V / n * L * L, K * t / n
    raise ValidationError(f"unknown rate kind {kind!r}; use polynomial or exponential")


def example_rate(kind: str, beta: float, profile: MarginProfile, params: BoundParams) -> BoundReport:
    """Closed-form zero-error rate for polynomially or exponentially decaying weights.

    Evaluated one ulp below the minimum margin so the empirical margin
    fraction is exactly zero there.
    """
    ds = min_margin(profile)
    if ds <= 0:
        raise ValidationError(f"zero-error rates need a positive minimum margin, got {ds}")
    delta = math.nextafter(ds, 0.0)
    c, conf = example_rate_terms(kind, beta, delta, params)
    pn = margin_cdf(profile, delta)
    exponent = 2.0 / (2 * beta - 1) if kind == "polynomial" else 0.0
    return BoundReport(f"example_{kind}", delta, pn, c, conf, pn + c + conf,
                       notes=[CONSTANTS_NOTE, LOG_FLOOR_NOTE],
                       details={"beta": beta, "delta_exponent": exponent, "min_margin": ds})
