"""Command-line front end.

Every command prints a table to stdout (or ``--out``) as CSV with ``# key=value``
manifest lines, or as JSON with the manifest embedded.  Floats use the
shortest round-trip representation, so reruns with the same flags are
byte-identical; wall time goes to stderr.  Exit status: 0 success,
1 numerical non-convergence, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .errors import (
    DomainError,
    InfiniteMeanError,
    NonConvergenceWarning,
    SeriesTruncationWarning,
)
from .exit_mean import (
    BridgeSpec,
    DiffusionModel,
    bessel_exit_mean_delta,
    bessel_exit_mean_kolmogorov,
    bessel_survival_probability,
    bm_exit_mean,
    bridge_exit_law,
    bridge_exit_mean_delta,
    bridge_exit_mean_kolmogorov,
    general_diffusion_exit_mean,
    survival_probability_bridge,
)
from .monte_carlo import (
    McConfig,
    mc_bm_exit,
    mc_exit,
    mc_last_passage,
    mc_walk_embedding,
)
from .quadrature import QuadConfig, integrate_1d, integrate_semi_infinite
from .special_functions import delta, kolmogorov_cdf, last_passage_density
from .walsh import PayoffSpec, corollary_integral, eq38_term, q_formula, tree_vs_gaussian

EXIT_OK, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2


class Table:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row width does not match the header")
        self.rows.append(list(values))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(table, manifest, fmt):
    if fmt == "json":
        doc = {"manifest": manifest, "columns": table.columns,
               "rows": [[_json_value(v) for v in row] for row in table.rows]}
        return json.dumps(doc, indent=1) + "\n"
    lines = [f"# {k}={_fmt(v)}" for k, v in manifest.items()]
    lines.append(",".join(table.columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in table.rows)
    return "\n".join(lines) + "\n"


def _parse_scan(text, flag):
    """``start:stop:geometric`` (halving) or ``start:stop:n`` (linear, n points)."""
    try:
        start, stop, kind = text.split(":")
        start, stop = float(start), float(stop)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag} expects start:stop:kind, got {text!r}") from None
    if kind == "geometric":
        if not start > stop > 0:
            raise argparse.ArgumentTypeError(f"{flag} geometric scan needs start > stop > 0")
        out, h = [], start
        while h >= stop * (1 - 1e-12):
            out.append(h)
            h /= 2.0
        return out
    try:
        n = int(kind)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag}: kind must be 'geometric' or a count") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"{flag}: count must be >= 1")
    return [float(v) for v in np.linspace(start, stop, n)]


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(flag):
    def check(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} must be a number, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{flag} must be positive, got {text}")
        return v
    return check


def _mc_config(args):
    return McConfig(n_paths=args.paths, n_steps=args.steps, seed=args.seed,
                    crossing_correction=not args.no_correction)


# --- specfun -------------------------------------------------------------

def cmd_specfun(args):
    if args.function == "kolmogorov":
        if not args.x_min > 0:
            raise DomainError(f"--x-min must be positive, got {args.x_min}")
        if not args.x_max >= args.x_min:
            raise DomainError("--x-max must be >= --x-min")
        xs = np.linspace(args.x_min, args.x_max, args.points)
        t = Table(["x", "F_alternating", "F_theta", "diff"])
        fa = kolmogorov_cdf(xs, method="alternating")
        ft = kolmogorov_cdf(xs, method="theta")
        for x, a, b in zip(xs, fa, ft):
            t.add(float(x), float(a), float(b), float(abs(a - b)))
        return t
    if args.function == "delta":
        if args.h is None or args.t is None:
            raise DomainError("delta needs --h and --t")
        zs = np.linspace(-args.h, args.h, args.points + 2)[1:-1]
        t = Table(["z", "h", "t", "delta"])
        for z, d in zip(zs, delta(zs, args.h, args.t)):
            t.add(float(z), args.h, args.t, float(d))
        return t
    # last-passage
    h = 1.0 if args.h is None else args.h
    t = Table(["quantity", "value", "error_estimate"])
    if args.check_normalization:
        cfg = QuadConfig(abs_tol=1e-12, rel_tol=1e-12, endpoint_substitution="sqrt_left")
        res = integrate_semi_infinite(lambda s: last_passage_density(s, h), cfg)
        t.add("integral", res.value, res.error_estimate)
    for s in (args.t_list or []):
        t.add(f"density(t={_fmt(s)})", float(last_passage_density(s, h)), 0.0)
    return t


# --- exit-mean / limit-scan ----------------------------------------------

def _h_values(args):
    if args.h_scan is not None:
        return args.h_scan
    if args.h is not None:
        return [args.h]
    raise DomainError("give --h or --h-scan")


def _mean_rows(args, table, h_values):
    for h in h_values:
        try:
            if args.process == "bridge":
                spec = BridgeSpec(0.0, args.y, args.T)
                d = bridge_exit_mean_delta(spec, h)
                k = bridge_exit_mean_kolmogorov(spec, h)
            else:
                d = bessel_exit_mean_delta(args.x, args.y, args.T, h)
                k = bessel_exit_mean_kolmogorov(args.x, args.y, args.T, h)
            table.add(h, d, k, abs(d - k) / k, k / (h * h), "OK", 0.0)
        except InfiniteMeanError:
            if args.process == "bridge":
                surv = survival_probability_bridge(BridgeSpec(0.0, args.y, args.T), h)
            else:
                surv = bessel_survival_probability(args.x, args.y, args.T, h)
            table.add(h, math.inf, math.inf, math.nan, math.inf, "INFINITE_MEAN", float(surv))


def _diffusion_model(args):
    sigma, kappa = args.sigma, args.kappa
    return DiffusionModel(drift=lambda u: -kappa * np.asarray(u, dtype=float),
                          diffusion=lambda u: sigma + 0.0 * np.asarray(u, dtype=float),
                          name=f"ou(kappa={kappa}, sigma={sigma})")


def cmd_exit_mean(args):
    if args.process == "bm":
        t = Table(["x", "a", "b", "mean"])
        t.add(args.x, args.a, args.b, bm_exit_mean(args.x, args.a, args.b))
        return t
    if args.process == "diffusion":
        model = _diffusion_model(args)
        t = Table(["h", "mean", "ratio_h2", "limit"])
        for h in _h_values(args):
            m = general_diffusion_exit_mean(model, args.x, h)
            t.add(h, m, m / (h * h), 1.0 / args.sigma ** 2)
        return t
    t = Table(["h", "mean_delta", "mean_kolmogorov", "rel_diff", "ratio_h2", "status",
               "survival_prob"])
    _mean_rows(args, t, _h_values(args))
    return t


def cmd_limit_scan(args):
    hs = args.h_scan or [0.4 / 2 ** j for j in range(5)]
    t = Table(["h", "mean", "ratio_h2", "abs_dev"])
    if args.process == "diffusion":
        model = _diffusion_model(args)
        limit = 1.0 / args.sigma ** 2
        evaluate = lambda h: general_diffusion_exit_mean(model, args.x, h)  # noqa: E731
    elif args.process == "bessel":
        limit = 1.0
        evaluate = lambda h: bessel_exit_mean_kolmogorov(args.x, args.y, args.T, h)  # noqa: E731
    else:
        limit = 1.0
        spec = BridgeSpec(0.0, args.y, args.T)
        evaluate = lambda h: bridge_exit_mean_kolmogorov(spec, h)  # noqa: E731
    for h in hs:
        m = evaluate(h)
        t.add(h, m, m / (h * h), abs(m / (h * h) - limit))
    return t


# --- Monte Carlo ---------------------------------------------------------

def cmd_mc_exit(args):
    cfg = _mc_config(args)
    a = -args.h if args.a is None else args.a
    b = args.h if args.b is None else args.b
    t = Table(["quantity", "mc", "se", "reference", "z"])
    if args.process == "bm":
        s = mc_bm_exit(0.0, a, b, cfg)
        ref = bm_exit_mean(0.0, a, b)
        t.add("mean_exit_time", s.mean_exit_time, s.se_exit_time, ref,
              (s.mean_exit_time - ref) / s.se_exit_time)
        return t
    s = mc_exit(BridgeSpec(0.0, args.y, args.T), (a, b), cfg)
    if a < args.y < b:
        ref = (float(survival_probability_bridge(BridgeSpec(0.0, args.y, args.T), args.h))
               if a == -b else math.nan)
        z = (s.prob_no_exit - ref) / s.se_prob_no_exit if s.se_prob_no_exit > 0 else math.nan
        t.add("prob_no_exit", s.prob_no_exit, s.se_prob_no_exit, ref, z)
        return t
    law = bridge_exit_law(args.T, args.y, a, b)
    t.add("mean_exit_time", s.mean_exit_time, s.se_exit_time, law.mean_time,
          (s.mean_exit_time - law.mean_time) / s.se_exit_time)
    t.add("mean_exit_position", s.mean_exit_position, s.se_exit_position, law.mean_position,
          (s.mean_exit_position - law.mean_position) / s.se_exit_position)
    t.add("prob_upper_exit", s.prob_upper_exit, s.se_prob_upper, law.p_upper,
          (s.prob_upper_exit - law.p_upper) / s.se_prob_upper)
    return t


def cmd_mc_qfun(args):
    cfg = _mc_config(args)
    t = Table(["x", "q_walk", "se_walk", "q_formula", "z", "p_up_step", "mean_k_star"])
    for x in args.x:
        w = mc_walk_embedding(x, args.T, args.h, cfg)
        q = q_formula(x, args.T, args.h, method="quadrature")
        t.add(x, w.q_hat.value, w.q_hat.se, q.value, (w.q_hat.value - q.value) / w.q_hat.se,
              w.p_up_step.value, w.mean_k_star)
    return t


def _last_passage_cdf(s, h):
    cfg = QuadConfig(abs_tol=1e-13, rel_tol=1e-12, endpoint_substitution="sqrt_left")
    return integrate_1d(lambda u: last_passage_density(u, h), 0.0, s, cfg).value


def last_passage_quantile(p, h):
    """``s`` with ``P(lambda_0 <= s) = p`` under the analytic density."""
    hi = h * h
    while _last_passage_cdf(hi, h) < p:
        hi *= 2.0
    return brentq(lambda s: _last_passage_cdf(s, h) - p, 1e-12, hi, xtol=1e-14, rtol=1e-13)


def cmd_mc_last_passage(args):
    cfg = _mc_config(args)
    r = mc_last_passage(args.h, args.t_sim, cfg)
    t = Table(["level", "s", "analytic_cdf", "empirical_cdf", "se", "z"])
    for p in args.levels:
        s = last_passage_quantile(p, args.h)
        e = r.cdf(s)
        t.add(p, s, p, e.value, e.se, (e.value - p) / e.se)
    return t


# --- Walsh ---------------------------------------------------------------

def cmd_qfun(args):
    cfg = _mc_config(args)
    t = Table(["x", "dist_term", "correction", "q_formula", "q_mc", "se_mc", "z", "on_grid"])
    for i, x in enumerate(args.x_grid):
        qf = q_formula(x, args.T, args.h, method=args.method,
                       cfg=cfg.with_(seed=(args.seed + 2 * i) % 2 ** 64))
        w = mc_walk_embedding(x, args.T, args.h, cfg.with_(seed=(args.seed + 2 * i + 1) % 2 ** 64))
        se = math.hypot(qf.se, w.q_hat.se)
        t.add(x, qf.dist_term, qf.correction, qf.value, w.q_hat.value, w.q_hat.se,
              (qf.value - w.q_hat.value) / se if se > 0 else math.nan, qf.on_grid)
    return t


def cmd_walsh_scan(args):
    t = Table(["h", "corollary_integral", "ratio_h2", "eq38_term", "ratio_h3", "tail_bound"])
    for h in args.h_list:
        c = corollary_integral(args.T, h, method=args.method)
        e = eq38_term(args.T, h, method=args.method)
        t.add(h, c.value, c.scaled, e.value, e.scaled, c.tail_bound)
    return t


def cmd_tree_price(args):
    payoff = PayoffSpec(args.payoff, strike=args.strike, knot=args.knot)
    t = Table(["n", "h", "tree_value", "gaussian_value", "error"])
    for n in args.n_list:
        r = tree_vs_gaussian(payoff, args.T, n)
        t.add(n, r.h, r.tree_value, r.gaussian_value, r.error)
    return t


# --- parser ----------------------------------------------------------------

def _add_common(p):
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="write the table to FILE instead of stdout")


def _add_mc(p, paths=100_000, steps=512):
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-correction", action="store_true",
                   help="disable the per-step crossing correction")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bridge-exit",
        description="First-exit statistics of Brownian and Bessel bridges.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("specfun", help="Kolmogorov F, Delta series, last-passage density")
    p.add_argument("function", choices=("kolmogorov", "delta", "last-passage"))
    p.add_argument("--x-min", type=float, default=0.3)
    p.add_argument("--x-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--h", type=_positive("--h"))
    p.add_argument("--t", type=_positive("--t"))
    p.add_argument("--t-list", type=_float_list)
    p.add_argument("--check-normalization", action="store_true")
    _add_common(p)
    p.set_defaults(run=cmd_specfun)

    p = sub.add_parser("exit-mean", help="mean exit times by quadrature")
    p.add_argument("--process", choices=("bridge", "bessel", "bm", "diffusion"),
                   default="bridge")
    p.add_argument("--T", type=_positive("--T"), default=1.0)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--a", type=float, default=-1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--h", type=_positive("--h"))
    p.add_argument("--h-scan", type=lambda s: _parse_scan(s, "--h-scan"))
    p.add_argument("--sigma", type=_positive("--sigma"), default=1.0)
    p.add_argument("--kappa", type=float, default=0.0, help="OU mean-reversion rate")
    _add_common(p)
    p.set_defaults(run=cmd_exit_mean)

    p = sub.add_parser("limit-scan", help="mean / h^2 along a halving h grid")
    p.add_argument("--process", choices=("bridge", "bessel", "diffusion"), default="bridge")
    p.add_argument("--T", type=_positive("--T"), default=1.0)
    p.add_argument("--x", type=float, default=1.0)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--h-scan", type=lambda s: _parse_scan(s, "--h-scan"))
    p.add_argument("--sigma", type=_positive("--sigma"), default=1.0)
    p.add_argument("--kappa", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(run=cmd_limit_scan)

    p = sub.add_parser("mc-exit", help="Monte Carlo exit statistics vs quadrature")
    p.add_argument("--process", choices=("bridge", "bm"), default="bridge")
    p.add_argument("--T", type=_positive("--T"), default=1.0)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--h", type=_positive("--h"), default=0.1)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    _add_mc(p)
    _add_common(p)
    p.set_defaults(run=cmd_mc_exit)

    p = sub.add_parser("mc-qfun", help="parity of the embedded walk vs the formula")
    p.add_argument("--x", type=_float_list, default=[0.33])
    p.add_argument("--T", type=_positive("--T"), default=1.0)
    p.add_argument("--h", type=_positive("--h"), default=0.25)
    _add_mc(p, paths=20_000)
    _add_common(p)
    p.set_defaults(run=cmd_mc_qfun)

    p = sub.add_parser("mc-last-passage", help="last zero before exit vs analytic CDF")
    p.add_argument("--h", type=_positive("--h"), default=1.0)
    p.add_argument("--t-sim", type=_positive("--t-sim"), default=30.0)
    p.add_argument("--levels", type=_float_list, default=[0.1, 0.25, 0.5, 0.75, 0.9])
    _add_mc(p, paths=50_000, steps=16384)
    _add_common(p)
    p.set_defaults(run=cmd_mc_last_passage)

    p = sub.add_parser("qfun", help="q(x) by the exit-position formula and by the walk")
    p.add_argument("--T", type=_positive("--T"), default=1.0)
    p.add_argument("--h", type=_positive("--h"), default=0.25)
    p.add_argument("--x-grid", type=lambda s: _parse_scan(s, "--x-grid"),
                   default=[0.05 + 0.05 * i for i in range(9)])
    p.add_argument("--method", choices=("mc", "quadrature"), default="mc")
    _add_mc(p, paths=20_000)
    _add_common(p)
    p.set_defaults(run=cmd_qfun)

    p = sub.add_parser("walsh-scan", help="corollary integral and the O(h^3) residual term")
    p.add_argument("--T", type=_positive("--T"), default=1.0)
    p.add_argument("--h-list", type=_float_list, default=[0.2, 0.1, 0.05])
    p.add_argument("--method", choices=("mc", "quadrature"), default="quadrature")
    _add_common(p)
    p.set_defaults(run=cmd_walsh_scan)

    p = sub.add_parser("tree-price", help="binomial walk vs Gaussian expectation")
    p.add_argument("--payoff", choices=("linear", "quadratic", "call", "kinked"),
                   default="call")
    p.add_argument("--strike", type=float, default=0.0)
    p.add_argument("--knot", type=float, default=0.0)
    p.add_argument("--T", type=_positive("--T"), default=1.0)
    p.add_argument("--n-list", type=_int_list, default=[100, 400, 1600])
    _add_common(p)
    p.set_defaults(run=cmd_tree_price)
    return parser


def _manifest(args):
    skip = {"run", "format", "out"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    out = {"command": args.command, "tool_version": __version__}
    for k, v in params.items():
        if k == "command":
            continue
        if isinstance(v, list):
            v = ";".join(_fmt(u) for u in v)
        out[k] = "" if v is None else v
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            table = args.run(args)
        except DomainError as exc:
            parser.error(str(exc))
    text = render(table, _manifest(args), args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for w in caught:
        print(f"warning: {w.category.__name__}: {w.message}", file=sys.stderr)
    print(f"wall_time_s={time.perf_counter() - start:.3f}", file=sys.stderr)
    nonconverged = any(issubclass(w.category, (NonConvergenceWarning, SeriesTruncationWarning))
                       for w in caught)
    return EXIT_NONCONVERGED if nonconverged else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
