"""Command-line interface: ``sharpot <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or invalid input, 2 numerical
non-convergence, 3 I/O error.
"""

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .barycenter import (
    BarycenterConfig,
    BarycenterProblem,
    barycenter_functional,
    barycenter_gd,
    regularized_barycenter_ibp,
)
from .exact import exact_wasserstein
from .exceptions import (
    DegenerateInstanceError,
    InvalidInputError,
    InvalidParameterError,
    NonConvergenceError,
    NumericalOverflowError,
    OutOfScaleError,
    StallError,
)
from .grad import finite_difference_gradient, regularized_gradient, sharp_gradient
from .learning import SinkhornRegressor
from .sinkhorn import SinkhornConfig, distances
from .studies import RATE_STUDY_HEADER, random_rate_instance, run_dirac_pair, run_rate_study

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 by default, which is reserved here for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log_domain(value):
    choices = {"auto": "auto", "on": True, "off": False}
    if value not in choices:
        raise argparse.ArgumentTypeError(f"expected auto, on or off, got {value!r}")
    return choices[value]


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _fmt(x):
    return io.FLOAT_FORMAT % x


class _Context:
    def __init__(self, args):
        self.args = args

    def info(self, msg):
        if not self.args.quiet:
            print(msg, file=sys.stderr)


def _sinkhorn_cfg(args):
    return SinkhornConfig(lam=args.lam, max_iter=args.max_iter, marginal_tol=args.tol, log_domain=args.log_domain)


def _data_flags(p, with_lambda=True):
    p.add_argument("--a", required=True, type=Path, help="first histogram (CSV or JSON)")
    p.add_argument("--b", required=True, type=Path, help="second histogram (CSV or JSON)")
    p.add_argument("--cost", required=True, type=Path, help="cost matrix (CSV or JSON)")
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float, required=True)
        p.add_argument("--tol", type=float, default=1e-6, help="marginal tolerance (default 1e-6)")
        p.add_argument("--max-iter", type=int, default=1000)
        p.add_argument("--log-domain", type=_log_domain, default="auto", help="auto, on or off")


def _load_pair(args):
    return io.read_histogram(args.a), io.read_histogram(args.b), io.read_matrix(args.cost)


def cmd_distance(ctx, args):
    a, b, M = _load_pair(args)
    sharp, reg, sol = distances(a, b, M, _sinkhorn_cfg(args))
    print(_fmt(reg if args.regularized else sharp))
    ctx.info(f"iterations={sol.iterations} residual={sol.residual:.3e} log_domain={sol.log_domain}")


def cmd_gradient(ctx, args):
    a, b, M = _load_pair(args)
    cfg = _sinkhorn_cfg(args)
    grad_fn = regularized_gradient if args.regularized else sharp_gradient
    g = grad_fn(a, b, M, cfg)
    print(io.format_row(g))
    if args.check_fd:
        fd_cfg = cfg.replace(marginal_tol=min(cfg.marginal_tol, 1e-13), max_iter=max(cfg.max_iter, 100000))

        def fun(x):
            sharp, reg, _ = distances(x, b, M, fd_cfg)
            return reg if args.regularized else sharp

        fd = finite_difference_gradient(fun, a, step=args.fd_step)
        analytic = np.array([g @ (e - 1.0 / a.size) for e in np.eye(a.size)])
        print(io.format_row(fd))
        print(f"max_discrepancy,{_fmt(np.abs(analytic - fd).max())}")


def cmd_exact(ctx, args):
    a, b, M = _load_pair(args)
    sol = exact_wasserstein(a, b, M)
    print(_fmt(sol.value))
    for i, j in zip(*np.nonzero(sol.plan)):
        print(f"{i},{j},{_fmt(sol.plan[i, j])}")
    ctx.info(f"pivots={sol.pivots} certificate={sol.certificate}")


def _load_costs(args, count):
    if (args.cost is None) == (args.costs is None):
        raise UsageError("give exactly one of --cost and --costs")
    if args.cost is not None:
        return io.read_matrix(args.cost)
    files = sorted(p for p in args.costs.iterdir() if p.suffix.lower() in (".csv", ".json"))
    if len(files) != count:
        raise UsageError(f"--costs holds {len(files)} cost files for {count} measures")
    return [io.read_matrix(p) for p in files]


def cmd_barycenter(ctx, args):
    measures = io.read_histograms(args.measures)
    costs = _load_costs(args, len(measures))
    weights = io.read_histogram(args.weights) if args.weights else None
    prob = BarycenterProblem(list(measures), costs, weights=weights)
    methods = ["sharp", "regularized"] if args.method == "both" else [args.method]
    cfg = BarycenterConfig(max_iter=args.max_iter, grad_tol=args.grad_tol)
    results, traces = [], []
    for method in methods:
        if method == "regularized":
            mu = regularized_barycenter_ibp(prob, args.lam)
            trace = None
        else:
            try:
                mu, trace = barycenter_gd(prob, args.lam, cfg=cfg, metric="sharp")
            except StallError as exc:
                warnings.warn(f"sharp barycenter stalled: {exc}", RuntimeWarning)
                mu, trace = exc.iterate, exc.trace
            ctx.info(f"sharp: {trace.iterations} iterations, {trace.reason}")
        results.append(mu)
        traces.append((method, trace))
        value = barycenter_functional(mu, prob, "sharp" if method == "sharp" else "regularized", lam=args.lam)
        ctx.info(f"{method}: objective {value:.12g}")
    if args.out:
        io.write_matrix(args.out, np.stack(results))
    else:
        for mu in results:
            print(io.format_row(mu))
    if args.trace:
        rows = []
        for method, trace in traces:
            if trace is None:
                continue
            steps = [float("nan")] + list(trace.steps)
            rows.extend((method, it, obj, st) for it, (obj, st) in enumerate(zip(trace.objective, steps)))
        io.write_records(args.trace, ("method", "iteration", "objective", "step"), rows)
    if args.svg:
        labels = [f"measure {i}" for i in range(len(measures))] + [f"{m} barycenter" for m in methods]
        io.emit_svg_bars(list(measures) + results, labels, args.svg)


def cmd_fit(ctx, args):
    X = io.read_matrix(args.inputs)
    Y = io.read_matrix(args.outputs)
    cost = io.read_matrix(args.cost) if args.cost else None
    model = SinkhornRegressor(sigma=args.sigma, gamma=args.gamma, metric=args.metric, lam=args.lam, cost=cost)
    model.fit(X, Y)
    io.save_model(args.model, model)
    ctx.info(f"fitted on {X.shape[0]} examples, residual {model.weight_model_.residual(X):.3e}")


def cmd_predict(ctx, args):
    model = io.load_model(args.model)
    X = io.read_matrix(args.inputs)
    params = {"metric": args.metric}
    if args.lam is not None:
        params["lam"] = args.lam
    model.set_params(**params)
    if args.cost:
        n = model.outputs_.shape[1]
        M = io.read_matrix(args.cost)
        if M.shape != (n, n):
            raise InvalidInputError(f"cost has shape {M.shape}, expected ({n}, {n})")
        model.cost_ = M
    P = model.predict(X)
    if args.out:
        io.write_matrix(args.out, P)
    else:
        for p in P:
            print(io.format_row(p))


def cmd_rate_study(ctx, args):
    given = [args.a, args.b, args.cost]
    if any(g is not None for g in given) and not all(g is not None for g in given):
        raise UsageError("--a, --b and --cost go together")
    if args.a is not None:
        a, b, M = _load_pair(args)
    else:
        if args.seed is None:
            raise UsageError("--seed is required to generate a random instance")
        a, b, M = random_rate_instance(args.seed, n=args.n)
    cfg = SinkhornConfig(lam=1.0, max_iter=args.max_iter, marginal_tol=args.tol)
    records, W = run_rate_study(a, b, M, args.lambdas, cfg)
    rows = [r.as_row() for r in records]
    if args.out:
        io.write_records(args.out, RATE_STUDY_HEADER, rows)
    else:
        print(",".join(RATE_STUDY_HEADER))
        for row in rows:
            print(f"{_fmt(row[0])},{_fmt(row[1])},{_fmt(row[2])},{row[3]}")
    ctx.info(f"exact value {W:.12g}")


def cmd_demo_example1(ctx, args):
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_dirac_pair(tuple(args.lambdas), n=21)
    panels, rows = [], []
    for lam, (sharp, reg, _) in results.items():
        panels.append((f"lambda = {lam:g}", [sharp, reg], ["sharp", "regularized"]))
        rows.append([lam, *sharp])
        rows.append([lam, *reg])
        print(f"lambda={lam:g} sharp_mass_at_midpoint={_fmt(sharp[10])} regularized_mass_at_midpoint={_fmt(reg[10])}")
    io.write_records(
        out_dir / "example1.csv", ["lambda"] + [f"bin{i}" for i in range(21)], rows
    )
    io.emit_svg_panels(panels, out_dir / "example1.svg")
    ctx.info(f"wrote {out_dir / 'example1.svg'} and {out_dir / 'example1.csv'}")


def build_parser():
    parser = _Parser(prog="sharpot", description="Sharp and regularized Sinkhorn distances and barycenters.")
    parser.add_argument("--seed", type=int, default=None, help="seed for any generated data")
    parser.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    parser.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("distance", help="sharp or regularized Sinkhorn distance")
    _data_flags(p)
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--sharp", action="store_true", help="sharp distance (default)")
    kind.add_argument("--regularized", action="store_true")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("gradient", help="gradient in the first histogram")
    _data_flags(p)
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--sharp", action="store_true", help="sharp distance (default)")
    kind.add_argument("--regularized", action="store_true")
    p.add_argument("--check-fd", action="store_true", help="also print a finite-difference estimate")
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradient)

    p = sub.add_parser("exact", help="exact Wasserstein distance (small instances)")
    _data_flags(p, with_lambda=False)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("barycenter", help="fixed-support barycenter")
    p.add_argument("--measures", required=True, type=Path, help="one histogram per line")
    p.add_argument("--cost", type=Path, help="shared cost matrix")
    p.add_argument("--costs", type=Path, help="directory with one cost file per measure (sorted by name)")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--method", choices=["sharp", "regularized", "both"], default="sharp")
    p.add_argument("--weights", type=Path, help="barycenter weights (default uniform)")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--grad-tol", type=float, default=1e-6)
    p.add_argument("--out", type=Path)
    p.add_argument("--trace", type=Path)
    p.add_argument("--svg", type=Path)
    p.set_defaults(func=cmd_barycenter)

    p = sub.add_parser("fit", help="fit a histogram regression model")
    p.add_argument("--inputs", required=True, type=Path, help="one input vector per line")
    p.add_argument("--outputs", required=True, type=Path, help="one histogram per line")
    p.add_argument("--model", required=True, type=Path, help="model file to write")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1e-3)
    p.add_argument("--metric", choices=["sharp", "regularized"], default="sharp")
    p.add_argument("--lambda", dest="lam", type=float, default=20.0)
    p.add_argument("--cost", type=Path)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict histograms with a fitted model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--inputs", required=True, type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--metric", choices=["sharp", "regularized"], default="sharp")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--cost", type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rate-study", help="distance gaps to the exact value as lambda grows")
    p.add_argument("--a", type=Path)
    p.add_argument("--b", type=Path)
    p.add_argument("--cost", type=Path)
    p.add_argument("--n", type=int, default=5, help="size of the generated instance")
    p.add_argument("--lambdas", type=_float_list, default=[float(x) for x in range(1, 31)])
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=100000)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_rate_study)

    p = sub.add_parser("demo-example1", help="barycenters of two Dirac masses, with a figure")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--lambdas", type=_float_list, default=[0.5, 1.0, 5.0])
    p.set_defaults(func=cmd_demo_example1)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    ctx = _Context(args)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        with threadpool_limits(limits=args.threads), warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            args.func(ctx, args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InvalidInputError, InvalidParameterError, OutOfScaleError) as exc:
        print(f"sharpot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergenceError, NumericalOverflowError, DegenerateInstanceError) as exc:
        print(f"sharpot: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"sharpot: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
