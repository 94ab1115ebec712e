"""Command-line interface.

Subcommands::

    estimate   robust moment estimate of a data file, printed as JSON
    calibrate  build D or I tables and write them as JSON
    evaluate   Monte Carlo evaluation, written as CSV
    breakdown  exact L-stage breakdown points of LU-statistics
    dist       quantiles, CDF values and moments of a distribution

Exit status: 0 success, 1 usage error, 2 unreadable or unusable data,
3 numerical failure.  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction

from . import calibration as cal
from . import distributions as dist
from .dataio import read_sample
from .errors import DataError, DomainError, InvariantMomentsError
from .invariant import DEFAULT_WL1, DEFAULT_WL2, FixedPointConfig, estimate
from .lstats import WLSpec
from .ustats import adjust_breakdown, lu_breakdown

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _wl(text):
    try:
        return WLSpec.parse(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _dist(text):
    try:
        return dist.DistributionSpec.parse(text)
    except (DomainError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fraction(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def build_parser():
    p = _Parser(prog="invmoments", description="Invariant robust moment estimators.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", help="estimate a moment of a data file")
    e.add_argument("data", help="CSV (one value per line) or raw float64 file; '-' for stdin")
    e.add_argument("--format", choices=("auto", "csv", "bin"), default="auto")
    e.add_argument("--moment", choices=("mean", "var", "tm", "fm", "skew", "kurt"), default="mean")
    e.add_argument("--method", choices=("rm", "qm", "ikm"), default="rm")
    e.add_argument("--d", type=float, help="use this d value instead of a table lookup")
    e.add_argument("--dtable", action="append", default=[], metavar="FILE",
                   help="D table or bundle (repeatable); default: shipped Weibull tables")
    e.add_argument("--itable", metavar="FILE", help="I table for --method ikm ('default' for the shipped one)")
    e.add_argument("--wl1", type=_wl, default=DEFAULT_WL1, help="first WL (default tm:eps=1/24)")
    e.add_argument("--wl2", type=_wl, default=DEFAULT_WL2, help="second WL (default median)")
    e.add_argument("--bs-size", type=int, default=2**16, help="quasi-bootstrap size")
    e.add_argument("--seed", type=int, default=0, help="quasi-bootstrap scrambling seed")
    e.add_argument("--scheme", choices=("mode", "hf"), default="mode")
    e.add_argument("--maxit", type=int, default=100)
    e.add_argument("--delta", type=float, default=1e-4)

    c = sub.add_parser("calibrate", help="build D or I tables")
    c.add_argument("--family", default="weibull")
    c.add_argument("--kind", choices=("d", "i"), default="d")
    c.add_argument("--out", required=True)
    c.add_argument("--etype", nargs="+", choices=("rm", "qm"), default=["rm", "qm"])
    c.add_argument("--orders", nargs="+", type=int, default=[1, 2, 3, 4])
    c.add_argument("--mu-lower", type=float)
    c.add_argument("--delta", type=float, default=0.1)
    c.add_argument("--count", type=int, default=70)
    c.add_argument("--n-cal", type=int, default=2**20)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--wl1", type=_wl, default=DEFAULT_WL1)
    c.add_argument("--wl2", type=_wl, default=DEFAULT_WL2)
    c.add_argument("--reps", type=int, default=200, help="I tables: replications per row")
    c.add_argument("--n", type=int, default=5184, help="I tables: sample size")
    c.add_argument("--bs-size", type=int, default=2**16)
    c.add_argument("--no-check", action="store_true", help="skip the build-time envelope check")

    v = sub.add_parser("evaluate", help="Monte Carlo evaluation to CSV")
    v.add_argument("--config", required=True, help="JSON evaluation config")
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--out", default="-")
    v.add_argument("--threads", type=int, help="worker threads (default from INVMOM_THREADS)")
    v.add_argument("--summary", action="store_true", help="also print aggregates to stderr")

    b = sub.add_parser("breakdown", help="L-stage breakdown for a target overall breakdown")
    b.add_argument("--epsilon", type=_fraction, required=True)
    b.add_argument("--degree", type=int, nargs="+", default=[2])
    b.add_argument("--inverse", action="store_true",
                   help="treat --epsilon as the L-stage value and print the overall breakdown")

    d = sub.add_parser("dist", help="quantiles, CDF and moments of a distribution")
    d.add_argument("--dist", type=_dist, required=True, help="e.g. weibull:shape=2,scale=1")
    d.add_argument("--p", type=float, nargs="*", default=[], help="probabilities for quantiles")
    d.add_argument("--x", type=float, nargs="*", default=[], help="points for CDF values")
    d.add_argument("--moments", action="store_true")
    return p


def _load_tables(paths):
    if not paths:
        return cal.default_tables()
    ts = None
    for path in paths:
        try:
            cur = cal.load_tables(path)
        except OSError as exc:
            raise DataError(f"cannot read table {path}: {exc}") from None
        except (ValueError, KeyError) as exc:
            raise DataError(f"malformed table {path}: {exc}") from None
        ts = cur if ts is None else ts.merge(cur)
    return ts


def _cmd_estimate(args, out):
    s = read_sample(args.data, args.format)
    tables = itable = None
    if args.d is None:
        tables = _load_tables(args.dtable)
    if args.method == "ikm":
        if not args.itable:
            raise UsageError("--method ikm requires --itable")
        try:
            itable = cal.default_itable() if args.itable == "default" else cal.load_itable(args.itable)
        except OSError as exc:
            raise DataError(f"cannot read {args.itable}: {exc}") from None
    res = estimate(s, args.moment, args.method, d=args.d, tables=tables, itable=itable,
                   wl1=args.wl1, wl2=args.wl2, cfg=FixedPointConfig(args.maxit, args.delta),
                   size=args.bs_size, seed=args.seed, scheme=args.scheme)
    out.write(json.dumps(res.to_dict(), sort_keys=True) + "\n")


def _cmd_calibrate(args, out):
    mu = args.mu_lower
    if mu is None:
        mu = dist.KURTOSIS_GRID_START.get(dist.canonical_family(args.family), 3.0)
    grid = cal.GridConfig(mu, args.delta, args.count)
    if args.kind == "d":
        obj = cal.build_d_tables(args.family, args.etype, args.orders, pairs=(args.wl1, args.wl2),
                                 grid=grid, n_cal=args.n_cal, seed=args.seed, check=not args.no_check)
    else:
        obj = cal.build_i_table(args.family, grid=grid, reps=args.reps, n=args.n, seed=args.seed,
                                etypes=args.etype, n_cal=args.n_cal, bs_size=args.bs_size)
    cal.save(obj, args.out)


def _cmd_evaluate(args, out):
    from .harness import EvalConfig, run_eval

    try:
        cfg = EvalConfig.from_json(args.config)
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"malformed config {args.config}: {exc}") from None
    cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    report = run_eval(cfg)
    if args.out == "-":
        out.write(report.to_csv())
    else:
        report.write_csv(args.out)
    if args.summary:
        for name, agg in report.summary().items():
            vals = " ".join(f"{k}={v:.4f}" for k, v in agg.items() if not math.isnan(v))
            print(f"{name}: {vals}", file=sys.stderr)


def _cmd_breakdown(args, out):
    for k in args.degree:
        val = lu_breakdown(args.epsilon, k) if args.inverse else adjust_breakdown(args.epsilon, k)
        text = str(val)
        if len(args.degree) > 1:
            text = f"{k}: {text}"
        out.write(text + "\n")


def _finite(v):
    # strict JSON has no inf or nan
    v = float(v)
    return v if math.isfinite(v) else None


def _cmd_dist(args, out):
    spec = args.dist
    res = {"dist": spec.to_dict()}
    if args.p:
        res["quantile"] = {repr(p): float(dist.quantile(spec, p)) for p in args.p}
    if args.x:
        res["cdf"] = {repr(x): float(dist.cdf(spec, x)) for x in args.x}
    if args.moments or not (args.p or args.x):
        order = 4
        if spec.family == "pareto":
            order = min(4, math.ceil(spec.shape) - 1)
        m = dist.population_moments(spec, order=order)
        res["moments"] = {
            "mean": _finite(m.mean),
            "central": {str(k): _finite(v) for k, v in m.central.items()},
            "skewness": _finite(m.skewness),
            "kurtosis": _finite(m.kurtosis),
            "sd_kernel": {str(k): _finite(v) for k, v in m.sd_kernel.items()},
        }
    out.write(json.dumps(res, sort_keys=True) + "\n")


_COMMANDS = {
    "estimate": _cmd_estimate,
    "calibrate": _cmd_calibrate,
    "evaluate": _cmd_evaluate,
    "breakdown": _cmd_breakdown,
    "dist": _cmd_dist,
}


def cli_main(argv=None, out=None):
    """Run the CLI and return the exit status."""
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        _COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"invmoments: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantMomentsError, ArithmeticError, ValueError) as exc:
        print(f"invmoments: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
