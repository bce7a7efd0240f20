"""Synthetic data, CSV ingestion, experiment orchestration and plot-data export."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .covering import base_covering_profile, bound_theorem5, n_infty
from .ensemble import BoundParams, ConvexEnsemble, Dataset, Stump, dyadic_grid, normalize
from .errors import IngestionError, ValidationError
from .margins import margin_cdf, margin_profile, min_margin, test_error
from .sparsity import (
    CLASSIC_KINDS,
    bound_gamma_dim,
    bound_sparsity,
    classic_bound,
    effective_dimension,
    example_rate,
    theorem1_bound,
)
from .trainers import adaboost, bagging
from .variance import bound_cluster, bound_variance, pointwise_variances

SCHEMA_VERSION = 1
SYNTH_KINDS = ("two_gaussians", "noisy_xor", "weight_profile_fixture")
ALL_BOUNDS = CLASSIC_KINDS + ("gamma_dim", "theorem1", "sparsity", "variance", "cluster", "theorem5")
EXTRA_BOUNDS = ("example_polynomial", "example_exponential")
PLOT_SERIES = ("margin", "covering", "bounds")


# ---------------------------------------------------------------- synthetic data


def _flip(y: np.ndarray, noise: float, rng) -> np.ndarray:
    if noise > 0:
        y = np.where(rng.random(y.size) < noise, -y, y)
    return y


def fixture_weights(T: int, beta: float, decay: str = "polynomial") -> np.ndarray:
    """Normalized ``j^-beta`` or ``exp(-beta j)`` weights for j = 1..T."""
    j = np.arange(1, T + 1, dtype=np.float64)
    if decay == "polynomial":
        w = j ** -beta
    elif decay == "exponential":
        w = np.exp(-beta * (j - 1))
    else:
        raise ValidationError(f"unknown decay {decay!r}; use polynomial or exponential")
    return w / w.sum()


def synth_data(kind: str, n: int, p: int, noise: float = 0.0, seed=0, mu: float = 1.0,
               T: int = 50, beta: float = 2.0, decay: str = "polynomial"):
    """Seeded synthetic sample.

    two_gaussians
        Balanced labels; features ``y * mu + N(0, 1)`` in every coordinate.
    noisy_xor
        Uniform features on ``[-1, 1]^p``; label is the product of the signs
        of the first two coordinates.
    weight_profile_fixture
        Returns ``(Dataset, ConvexEnsemble)``: T distinct stumps with
        ``j^-beta`` (or ``exp(-beta j)``) weights, labels ``sign f`` (0 -> +1).

    ``noise`` is the label flip probability, in ``[0, 1/2)``.
    """
    if kind not in SYNTH_KINDS:
        raise ValidationError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    if n < 2 or p < 1:
        raise ValidationError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    if not 0.0 <= noise < 0.5:
        raise ValidationError(f"noise must lie in [0, 0.5), got {noise}")
    rng = np.random.default_rng(seed)
    if kind == "two_gaussians":
        y = rng.choice(np.array([-1.0, 1.0]), size=n)
        X = y[:, None] * mu + rng.standard_normal((n, p))
        return Dataset(X, _flip(y, noise, rng))
    if kind == "noisy_xor":
        if p < 2:
            raise ValidationError("noisy_xor needs p >= 2")
        X = rng.uniform(-1.0, 1.0, size=(n, p))
        y = np.where((X[:, 0] > 0) == (X[:, 1] > 0), 1.0, -1.0)
        return Dataset(X, _flip(y, noise, rng))
    if T < 1:
        raise ValidationError(f"fixture needs T >= 1, got {T}")
    X = rng.uniform(0.0, 1.0, size=(n, p))
    w = fixture_weights(T, beta, decay)
    per = -(-T // p)
    stumps = [Stump(k % p, (k // p + 0.5) / per, 1 if k % 2 == 0 else -1) for k in range(T)]
    f = normalize(ConvexEnsemble(tuple(zip(w.tolist(), stumps))))
    fx = f.decision_function(X)
    y = np.where(fx >= 0, 1.0, -1.0)
    return Dataset(X, _flip(y, noise, rng)), f


# ---------------------------------------------------------------- CSV


def save_csv(data: Dataset, path) -> None:
    """Write ``f0..f{p-1},label`` with round-trippable decimal values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(data.p)] + ["label"])
        for x, y in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def load_csv(path) -> Dataset:
    """Read a dataset with a header row and a ``label`` column of -1/+1 values."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise IngestionError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if "label" not in header:
            raise IngestionError(f"{path}: missing 'label' column")
        li = header.index("label")
        feats = [i for i in range(len(header)) if i != li]
        if not feats:
            raise IngestionError(f"{path}: no feature columns")
        X, y = [], []
        for r, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
            vals = []
            for i, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"{path}: row {r}, column '{header[i]}': non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise IngestionError(f"{path}: row {r}, column '{header[i]}': non-finite value {cell!r}")
                vals.append(v)
            if vals[li] not in (-1.0, 1.0):
                raise IngestionError(f"{path}: row {r}, column 'label': {row[li]!r} is not -1 or +1")
            X.append([vals[i] for i in feats])
            y.append(vals[li])
    if not X:
        raise IngestionError(f"{path}: no data rows")
    return Dataset(np.array(X), np.array(y))


# ---------------------------------------------------------------- bounds registry


def stump_class_size(data: Dataset) -> int:
    """Number of distinct stumps on the sample: 2 * sum over features of (distinct values + 1)."""
    return int(2 * sum(np.unique(data.features[:, j]).size + 1 for j in range(data.p)))


def evaluate_bounds(f: ConvexEnsemble, train: Dataset, params: BoundParams, names, seed=0, profile=None):
    """BoundReports for the named bounds (``"all"`` expands to every standard bound)."""
    names = list(ALL_BOUNDS) if names in ("all", ["all"], ("all",)) else list(names)
    unknown = [nm for nm in names if nm not in ALL_BOUNDS + EXTRA_BOUNDS]
    if unknown:
        raise ValidationError(f"unknown bound(s) {unknown}; choose from {ALL_BOUNDS + EXTRA_BOUNDS}")
    profile = profile if profile is not None else margin_profile(f, train)
    reports = []
    for nm in names:
        if nm in CLASSIC_KINDS:
            extra = {}
            if nm == "linfty_2_7":
                extra["n_infty"] = max(1, n_infty(f, train))
            if nm == "breiman_2_11":
                extra["N"] = stump_class_size(train)
            reports.append(classic_bound(nm, profile, params, extra))
        elif nm == "gamma_dim":
            reports.append(bound_gamma_dim(f, profile, params))
        elif nm == "theorem1":
            reports.append(theorem1_bound(f, train, params, profile=profile))
        elif nm == "sparsity":
            reports.append(bound_sparsity(f.fold_signs(), profile, params))
        elif nm == "variance":
            reports.append(bound_variance(f, train, profile, params))
        elif nm == "cluster":
            reports.append(bound_cluster(f, train, profile, params, seed))
        elif nm == "theorem5":
            reports.append(bound_theorem5(f, train, profile, params))
        else:
            kind = nm.split("_", 1)[1]
            reports.append(example_rate(kind, 2.0, profile, params))
    return reports


# ---------------------------------------------------------------- experiments


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce an experiment run."""

    source: str = "two_gaussians"  # a synthetic kind or a CSV path
    n: int = 200
    p: int = 2
    noise: float = 0.1
    mu: float = 1.0
    T: int = 50
    beta: float = 2.0
    decay: str = "polynomial"
    trainer: str = "adaboost"  # adaboost | bagging | fixture
    rounds: int = 50
    bounds: list = field(default_factory=lambda: ["all"])
    V: float = 2.0
    t: float = 3.0
    K: float = 1.0
    delta_kmax: int = 16
    p_exponent: float = 1.0
    m_max: int = 8
    replicates: int = 1
    seed: int = 0
    train_fraction: float = 0.7
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValidationError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.trainer not in ("adaboost", "bagging", "fixture"):
            raise ValidationError(f"unknown trainer {self.trainer!r}")
        if self.trainer == "fixture" and self.source != "weight_profile_fixture":
            raise ValidationError("trainer 'fixture' needs source 'weight_profile_fixture'")
        if self.rounds < 1:
            raise ValidationError(f"rounds must be >= 1, got {self.rounds}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if isinstance(self.bounds, str):
            self.bounds = [b.strip() for b in self.bounds.split(",") if b.strip()]

    @property
    def test_fraction(self) -> float:
        return 1.0 - self.train_fraction

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc.pop("workers")  # does not affect results
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        bad = sorted(set(doc) - known)
        if bad:
            raise ValidationError(f"unknown config field(s): {bad}")
        return cls(**doc)

    def bound_params(self, n: int) -> BoundParams:
        return BoundParams(n=n, V=self.V, t=self.t, K=self.K, delta_grid=dyadic_grid(1, self.delta_kmax),
                           p_exponent=self.p_exponent, m_max=self.m_max)


def split_indices(n: int, train_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive train/test index sets, each nonempty."""
    perm = rng.permutation(n)
    k = min(max(int(round(train_fraction * n)), 1), n - 1)
    return np.sort(perm[:k]), np.sort(perm[k:])


def _slope(xs, ys) -> float:
    return float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])


def fixture_slopes(f: ConvexEnsemble, params: BoundParams) -> dict:
    """Slopes of log e_n and log(sparsity complexity term) against log(1/delta), delta = 2^-2..2^-6."""
    deltas = [2.0 ** -k for k in range(2, 7)]
    e = [effective_dimension(f, d, params.n) for d in deltas]
    x = [math.log(1 / d) for d in deltas]
    comp = [params.V * ei / params.n * max(1.0, math.log(params.n / d)) for ei, d in zip(e, deltas)]
    return {
        "deltas": deltas,
        "effective_dimension": e,
        "effective_dimension_slope": _slope(x, np.log(e)),
        "complexity_term_slope": _slope(x, np.log(comp)),
    }


def _series(f, train, profile, params, reports):
    pts = sorted({-1.0, 1.0} | set(profile.sorted_margins.tolist()) | set(params.delta_grid))
    cov = base_covering_profile(f, train)
    return {
        "margin": [[d, margin_cdf(profile, d)] for d in pts],
        "covering": [[e, c] for e, c in cov.rows()],
        "bounds": {r.bound_name: [list(p) for p in r.curve] for r in reports},
    }


def run_replicate(config: ExperimentConfig, index: int, seed_seq) -> dict:
    data_ss, split_ss, train_ss, bound_ss = seed_seq.spawn(4)
    fixture_f = None
    if config.source in SYNTH_KINDS:
        out = synth_data(config.source, config.n, config.p, config.noise, data_ss, mu=config.mu,
                         T=config.T, beta=config.beta, decay=config.decay)
        data, fixture_f = out if isinstance(out, tuple) else (out, None)
    else:
        data = load_csv(config.source)
    tr, te = split_indices(data.n, config.train_fraction, np.random.default_rng(split_ss))
    train, test = data.subset(tr), data.subset(te)
    if config.trainer == "adaboost":
        f = adaboost(train, config.rounds)
    elif config.trainer == "bagging":
        f = bagging(train, config.rounds, np.random.default_rng(train_ss))
    else:
        f = fixture_f
    params = config.bound_params(train.n)
    profile = margin_profile(f, train)
    bound_seed = int(bound_ss.generate_state(1)[0])
    reports = evaluate_bounds(f, train, params, config.bounds, seed=bound_seed, profile=profile)
    s2 = pointwise_variances(f, train.features)
    complexities = {
        "T": f.T,
        "n_infty": n_infty(f, train),
        "min_margin": min_margin(profile),
        "mean_variance": float(np.mean(s2)),
        "effective_dimension": {repr(d): effective_dimension(f.fold_signs(), d, params.n)
                                for d in params.delta_grid[:8]} if params.n >= 2 else {},
    }
    rep = {
        "index": index,
        "n_train": int(train.n),
        "n_test": int(test.n),
        "test_error": test_error(f, test),
        "bounds": [r.to_dict() for r in reports],
        "complexities": complexities,
        "series": _series(f, train, profile, params, reports),
        "ensemble": f.to_dict(),
    }
    if fixture_f is not None:
        rep["fixture"] = fixture_slopes(f, params)
    return rep


def _run_one(args):
    config, index, ss = args
    try:
        return run_replicate(config, index, ss)
    except ValidationError as exc:
        raise ValidationError(f"replicate {index}: {exc}") from exc


def _aggregate(config, replicates) -> dict:
    names = [b["bound_name"] for b in replicates[0]["bounds"]]
    per_bound = {}
    for i, nm in enumerate(names):
        rows = [(r["bounds"][i], r["test_error"]) for r in replicates]
        per_bound[nm] = {
            "coverage_frequency": float(np.mean([b["total"] >= te for b, te in rows])),
            "mean_total": float(np.mean([b["total"] for b, _ in rows])),
            "mean_margin_term": float(np.mean([b["margin_term"] for b, _ in rows])),
            "mean_complexity_term": float(np.mean([b["complexity_term"] for b, _ in rows])),
            "mean_confidence_term": float(np.mean([b["confidence_term"] for b, _ in rows])),
        }
    agg = {
        "replicates": len(replicates),
        "mean_test_error": float(np.mean([r["test_error"] for r in replicates])),
        "bounds": per_bound,
        "note": "coverage frequencies are observations only; the bound constants are user-chosen",
    }
    if "fixture" in replicates[0]:
        agg["fixture_effective_dimension_slope"] = float(
            np.mean([r["fixture"]["effective_dimension_slope"] for r in replicates]))
        agg["fixture_complexity_term_slope"] = float(
            np.mean([r["fixture"]["complexity_term_slope"] for r in replicates]))
        if config.decay == "polynomial":
            agg["fixture_expected_slope"] = 2.0 / (2.0 * config.beta - 1.0)
    return agg


def run_experiment(config: ExperimentConfig) -> dict:
    """Run all replicates (optionally in parallel) and assemble the ordered report."""
    seeds = np.random.SeedSequence(config.seed).spawn(config.replicates)
    jobs = [(config, i, ss) for i, ss in enumerate(seeds)]
    if config.workers > 1 and config.replicates > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            replicates = list(pool.map(_run_one, jobs))
    else:
        replicates = [_run_one(j) for j in jobs]
    return {
        "schema": SCHEMA_VERSION,
        "config": config.to_dict(),
        "replicates": replicates,
        "aggregate": _aggregate(config, replicates),
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_report(report))


# ---------------------------------------------------------------- plot data


def emit_plot_data(report: dict, which, out_dir, replicate: int = 0, bounds=None) -> list[str]:
    """Write CSV series (margin, covering, bounds) for one replicate; return the paths."""
    which = [which] if isinstance(which, str) else list(which)
    if not which:
        raise ValidationError("no plot series selected")
    bad = [w for w in which if w not in PLOT_SERIES]
    if bad:
        raise ValidationError(f"unknown plot series {bad}; choose from {PLOT_SERIES}")
    try:
        series = report["replicates"][replicate]["series"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ValidationError(f"report has no series for replicate {replicate}") from exc
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for w in which:
        if w not in series:
            raise ValidationError(f"report lacks the {w!r} series")
        path = os.path.join(out_dir, f"{w}.csv")
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            if w == "margin":
                out.writerow(["delta", "margin_cdf"])
                out.writerows([repr(float(d)), repr(float(v))] for d, v in series[w])
            elif w == "covering":
                out.writerow(["eps", "count"])
                out.writerows([repr(float(e)), int(c)] for e, c in series[w])
            else:
                out.writerow(["bound", "delta", "total"])
                for name, curve in series[w].items():
                    if bounds and name not in bounds:
                        continue
                    out.writerows([name, repr(float(d)), repr(float(t))] for d, t in curve)
        paths.append(path)
    return paths
