"""Command-line interface.

Exit codes: 0 on success, 2 on invalid input, 3 when a numerical routine
fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import covering, harness, margins, randomized, variance
from .ensemble import BoundParams, dyadic_grid, load_ensemble, save_ensemble
from .errors import ConvergenceError, ValidationError
from .trainers import adaboost, bagging


def _params(args, n: int) -> BoundParams:
    grid = margins.parse_grid(args.grid) if getattr(args, "grid", None) else dyadic_grid()
    return BoundParams(n=n, V=args.V, t=args.t, K=args.K, delta_grid=grid,
                       p_exponent=getattr(args, "p_exponent", 1.0), m_max=getattr(args, "m_max", 8))


def _add_params(p, grid=True):
    p.add_argument("--V", type=float, default=2.0, help="covering exponent of the base class")
    p.add_argument("--t", type=float, default=3.0, help="confidence exponent")
    p.add_argument("--K", type=float, default=1.0, help="stand-in for the absolute constant")
    if grid:
        p.add_argument("--grid", default="dyadic", help="dyadic, dyadic:<k> or linear:<step>")


def _emit(text: str, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------- subcommands


def cmd_synth(args):
    out = harness.synth_data(args.kind, args.n, args.p, args.noise, args.seed, mu=args.mu,
                             T=args.T, beta=args.beta, decay=args.decay)
    data, f = out if isinstance(out, tuple) else (out, None)
    harness.save_csv(data, args.out)
    if f is not None and args.model_out:
        save_ensemble(f, args.model_out)


def cmd_train(args):
    data = harness.load_csv(args.data)
    if args.algo == "adaboost":
        f = adaboost(data, args.rounds)
    else:
        f = bagging(data, args.rounds, args.seed)
    save_ensemble(f, args.out)


def cmd_margins(args):
    f = load_ensemble(args.model)
    data = harness.load_csv(args.data)
    prof = margins.margin_profile(f, data)
    rows = [[repr(d), repr(v)] for d, v in margins.margin_curve(prof, margins.parse_grid(args.grid))]
    _emit(_csv_text(["delta", "margin_cdf"], rows), args.out)


def cmd_complexity(args):
    f = load_ensemble(args.model)
    data = harness.load_csv(args.data)
    if args.measure == "variance":
        s2 = variance.pointwise_variances(f, data.features)
        _emit(_csv_text(["row", "variance"], [[i, repr(float(v))] for i, v in enumerate(s2)]), args.out)
    elif args.measure == "clusters":
        best = None
        docs = []
        for m in range(1, args.m_max + 1):
            c = variance.search_clusters(f, data, m, args.seed)
            docs.append(c.to_dict())
            if best is None or c.objective < best.objective:
                best = c
        s2 = variance.cluster_variances(best, data.features)
        _emit(_csv_text(["row", "cluster_variance"], [[i, repr(float(v))] for i, v in enumerate(s2)]), args.out)
        if args.doc:
            with open(args.doc, "w") as fh:
                fh.write(_json({"best_m": best.m, "decompositions": docs}))
    elif args.measure == "covering":
        grid = None if args.grid == "dyadic" else margins.parse_grid(args.grid)
        cp = covering.base_covering_profile(f, data, grid=grid)
        _emit(_csv_text(["eps", "count"], [[repr(e), c] for e, c in cp.rows()]), args.out)
        if args.doc:
            curve = covering.EntropyCurve(cp)
            nodes = [[repr(d), repr(curve(d))] for d in dyadic_grid(2, 16)]
            with open(args.doc, "w") as fh:
                fh.write(_json({"n_infty": covering.n_infty(f, data), "covering": cp.rows(),
                                "source": cp.source, "metric": cp.metric, "psi_nodes": nodes}))
    else:
        from .sparsity import effective_dimension_argmin

        g = f.fold_signs()
        rows = []
        for d in dyadic_grid():
            e, k = effective_dimension_argmin(g, d, data.n)
            rows.append([repr(d), repr(e), k])
        _emit(_csv_text(["delta", "effective_dimension", "d"], rows), args.out)


def cmd_bounds(args):
    f = load_ensemble(args.model)
    train = harness.load_csv(args.train)
    params = _params(args, train.n)
    names = "all" if args.which == "all" else [w.strip() for w in args.which.split(",") if w.strip()]
    reports = harness.evaluate_bounds(f, train, params, names, seed=args.seed)
    doc = {"bounds": [r.to_dict() for r in reports]}
    if args.test:
        doc["test_error"] = margins.test_error(f, harness.load_csv(args.test))
    _emit(_json(doc), args.out)


def cmd_verify(args):
    f = load_ensemble(args.model)
    data = harness.load_csv(args.data)
    params = _params(args, data.n)
    if args.check == "maurey":
        rep = randomized.check_maurey_tail(f.fold_signs(), data, args.delta, args.d, params, args.samples, args.seed)
    else:
        c = variance.search_clusters(f, data, args.m, args.seed)
        if args.check == "cluster-variance":
            rep = randomized.check_cluster_variance(c, f, data, args.samples, args.seed)
        elif args.check == "sigma-hat":
            vals = randomized.sigma_hat_batch(c, data.features, args.N, args.samples, args.seed)
            mc = vals.mean(axis=0)
            exact = variance.cluster_variances(c, data.features)
            se = vals.std(axis=0, ddof=1) / np.sqrt(args.samples)
            ok = np.abs(mc - exact) <= 3 * se + 1e-12
            rep = randomized.CheckReport(
                "sigma-hat", bool(np.mean(ok) >= 0.95),
                quantities={"N": args.N, "M": args.samples, "fraction_within": float(np.mean(ok)),
                            "max_summand": float(vals.max(initial=0.0))},
                per_row={"analytic": exact, "monte_carlo": mc, "stderr": se})
        else:
            rep = randomized.check_bernstein_tails(c, data, args.gamma, args.delta, params, args.samples,
                                                   args.seed, K_user=args.K_user)
    _emit(_json(rep.to_dict()), args.out)
    return 0


def cmd_experiment(args):
    if args.config:
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{args.config}: invalid JSON ({exc})") from exc
        cfg = harness.ExperimentConfig.from_dict(doc)
    else:
        cfg = harness.ExperimentConfig()
    overrides = {k: getattr(args, k) for k in ("seed", "replicates", "workers") if getattr(args, k) is not None}
    if overrides:
        cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), "workers": cfg.workers, **overrides})
    report = harness.run_experiment(cfg)
    _emit(harness.dumps_report(report), args.out)


def cmd_plot_data(args):
    with open(args.report) as fh:
        report = json.load(fh)
    which = [w.strip() for w in args.which.split(",") if w.strip()]
    bounds = [b.strip() for b in args.bounds.split(",")] if args.bounds else None
    for path in harness.emit_plot_data(report, which, args.out_dir, replicate=args.replicate, bounds=bounds):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convex-margins", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--kind", choices=harness.SYNTH_KINDS, default="two_gaussians")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--T", type=int, default=50, help="fixture ensemble size")
    p.add_argument("--beta", type=float, default=2.0, help="fixture weight decay rate")
    p.add_argument("--decay", choices=["polynomial", "exponential"], default="polynomial")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", help="where to save the fixture ensemble")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train AdaBoost or bagging over stumps")
    p.add_argument("--algo", choices=["adaboost", "bagging"], default="adaboost")
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("margins", help="empirical margin CDF as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", default="dyadic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_margins)

    p = sub.add_parser("complexity", help="variance, cluster, covering or sparsity measures")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--measure", choices=["variance", "clusters", "covering", "sparsity"], default="variance")
    p.add_argument("--m-max", dest="m_max", type=int, default=8)
    p.add_argument("--grid", default="dyadic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--doc", help="JSON side document (decompositions or entropy nodes)")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("bounds", help="evaluate margin bounds as a JSON document")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test")
    p.add_argument("--which", default="all")
    p.add_argument("--m-max", dest="m_max", type=int, default=8)
    p.add_argument("--p-exponent", dest="p_exponent", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_params(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="Monte Carlo checks of the randomized approximations")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--check", choices=["maurey", "cluster-variance", "sigma-hat", "bernstein"], required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--N", type=int, default=1, help="pairs per sigma-hat estimate")
    p.add_argument("--K-user", dest="K_user", type=float, default=16.0)
    p.add_argument("--out")
    _add_params(p, grid=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run a replicated experiment and write the report")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot-data", help="export CSV series from an experiment report")
    p.add_argument("--report", required=True)
    p.add_argument("--which", default="margin,covering,bounds")
    p.add_argument("--bounds", help="comma-separated bound names to keep")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
