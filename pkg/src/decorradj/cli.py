"""Command line entry point: ``simulate``, ``estimate`` and ``diagnose``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import diagnostics as dg
from . import estimators as est
from .decorrelation import DecorrelationProbs, draw_quadruples
from .population import (
    DataError,
    FunctionClassSpec,
    ResidualSet,
    has_potentials,
    load_observed_csv,
    load_potentials_csv,
    norm_n,
    oracle_projection,
)
from .regressors import (
    BACKENDS,
    DegenerateSubsetError,
    LassoConvergenceError,
    TrainingSubset,
    default_lambda,
    fit_backend,
)
from .simharness import ConfigError, InstanceError, load_config, raw_line, run_experiment, write_metrics_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

NUMERIC_ERRORS = (
    np.linalg.LinAlgError,
    est.DegenerateAssignmentError,
    DegenerateSubsetError,
    LassoConvergenceError,
    dg.NoRootError,
    FloatingPointError,
    InstanceError,
)

ESTIMATE_METHODS = tuple(m for m in est.METHODS if m != "external_baseline")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _json_value(v):
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_json_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    return format(f, ".17g") if math.isfinite(f) else "null"


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    return _json_value(obj)


# ------------------------------------------------------------------ simulate


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.threads is not None:
        config = replace(config, threads=args.threads)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    raw_fh = open(os.path.join(out_dir, "raw_reports.jsonl"), "w", encoding="utf-8") if args.raw else None

    def write_raw(family, n, rep, entries):
        for e in entries:
            raw_fh.write(raw_line(family, n, rep, e) + "\n")

    sink = write_raw if raw_fh is not None else None

    try:
        rows = run_experiment(config, raw_sink=sink)
    finally:
        if raw_fh is not None:
            raw_fh.close()
    path = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(path, rows)
    if args.plot:
        from .plotting import render_figures

        render_figures(rows, out_dir, config.alpha_level)
    print(path)
    return EXIT_OK


# ------------------------------------------------------------------ estimate


def _probs(args, pi_T):
    if args.pi_r is None:
        return DecorrelationProbs.symmetric(pi_T)
    return DecorrelationProbs.from_fit_probs(pi_T, args.pi_r, args.pi_rbar)


def _design(X, args, backend="ols"):
    """Prepend an intercept for linear backends unless ``--no-intercept``."""
    if args.no_intercept or backend not in ("ols", "lasso"):
        return X
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _fit(args, X, y, mask, prob):
    opts = {}
    if args.lam is not None:
        opts["lambda"] = args.lam
    if args.y_inf is not None:
        opts["y_inf"] = args.y_inf
    if args.smoothness is not None:
        opts["alpha"] = args.smoothness
    return fit_backend(args.backend, X, y, TrainingSubset(mask, prob), **opts)


def _oracle_with_intercept(pop):
    X = np.hstack([np.ones((pop.n, 1)), pop.X])
    cls = FunctionClassSpec("linear")
    return oracle_projection(type(pop)(X, pop.y1, pop.y0, has_intercept=True), cls)


def cmd_estimate(args) -> int:
    if args.method not in ESTIMATE_METHODS:
        raise ConfigError(f"--method must be one of {ESTIMATE_METHODS}")
    if args.backend in ("regressogram", "regressogram_interp") and args.smoothness is None:
        raise ConfigError("regressogram backends need --smoothness")
    data = load_observed_csv(args.data)
    y, T, X = data.y, data.t, data.X
    n = data.n
    if X.shape[1] == 0 and args.backend != "zero" and args.method.removeprefix("hajek_") in ("adj", "dc"):
        raise DataError("adjusted estimators need covariate columns")
    X = _design(X, args, args.backend)
    pi_T = args.pi_t if args.pi_t is not None else float(T.mean())
    if not (0.0 < pi_T < 1.0):
        raise DataError("treatment probability must lie in (0, 1); pass --pi-t")
    method = args.method
    base = method.removeprefix("hajek_")
    hajek = method.startswith("hajek_")
    probs = quad = None
    if base.startswith("dc"):
        try:
            probs = _probs(args, pi_T)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        quad = draw_quadruples(T, probs, np.random.Generator(np.random.Philox(args.seed)))
    if base.endswith("_oracle"):
        if not has_potentials(args.data):
            raise DataError("oracle methods need y1 and y0 columns")
        pop = load_potentials_csv(args.data)
        f1, f0 = oracle_projection(pop, FunctionClassSpec("linear")) if args.no_intercept else \
            _oracle_with_intercept(pop)
        fits = {"f1": f1, "f0": f0, "fR": f1, "fRbar": f0}
    elif base in ("adj", "dc"):
        if base == "adj":
            fits = {"f1": _fit(args, X, y, T == 1, pi_T), "f0": _fit(args, X, y, T == 0, 1 - pi_T)}
        else:
            fits = {
                "fR": _fit(args, X, y, quad.R == 1, probs.pi_R),
                "fRbar": _fit(args, X, y, quad.Rbar == 1, probs.pi_Rbar),
            }
    else:
        fits = {}
    a = args.alpha_level
    if base == "dim":
        point = est.hajek_dim(y, T) if hajek else est.dim(y, T, pi_T)
        var = est.dim_variance_plugin(y, T, pi_T)
    elif base.startswith("adj"):
        f1, f0 = fits["f1"], fits["f0"]
        point = est.hajek_adj(y, T, f1, f0) if hajek else est.adj(y, T, f1, f0, pi_T)
        var = est.adj_variance_plugin(y, T, f1, f0, pi_T)
    else:
        fR, fRb = fits["fR"], fits["fRbar"]
        point = est.hajek_dc(y, quad, fR, fRb) if hajek else est.dc(y, quad, fR, fRb, probs)
        var = est.v_hat(y, quad, fR, fRb, probs)
    print(est.EstimateReport.build(method, point, var, n, a).to_json())
    return EXIT_OK


# ------------------------------------------------------------------ diagnose


def _arm_residual_norm(X, y, mask):
    if mask.sum() == 0:
        raise DataError("an arm has no units")
    sub = TrainingSubset(mask, 0.5)
    f = fit_backend("ols", X, y, sub)
    return norm_n((y - f.predictions)[mask])


def cmd_diagnose(args) -> int:
    data = load_observed_csv(args.data)
    X, y, T = data.X, data.y, data.t
    n, d = X.shape
    if d == 0:
        raise DataError("diagnose needs covariate columns")
    X = _design(X, args)
    n, d = X.shape
    pi_T = args.pi_t if args.pi_t is not None else float(T.mean())
    if not (0.0 < pi_T < 1.0):
        raise DataError("treatment probability must lie in (0, 1); pass --pi-t")
    try:
        probs = _probs(args, pi_T)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    delta = args.delta
    if not (0.0 < delta < 1.0):
        raise ConfigError("--delta must lie in (0, 1)")
    kappa2 = dg.max_leverage(X)
    out = {"n": n, "d": d, "kappa2": kappa2}
    if has_potentials(args.data):
        pop = load_potentials_csv(args.data)
        f1, f0 = oracle_projection(pop, FunctionClassSpec("linear")) if args.no_intercept else \
            _oracle_with_intercept(pop)
        resid = ResidualSet(pop.y1 - f1, pop.y0 - f0)
        out["mu_n"] = dg.residual_uniformity(resid)
        out["residual_source"] = "potentials"
        d1, d0 = norm_n(resid.delta1), norm_n(resid.delta0)
    else:
        resid = None
        out["mu_n"] = None
        out["residual_source"] = "observed_arm_ols"
        d1 = _arm_residual_norm(X, y, T == 1)
        d0 = _arm_residual_norm(X, y, T == 0)
    delta2bar = max(d1, d0)
    bounds = {}
    if d >= 2:
        def eps1(p, dl):
            return dg.ols_bound(kappa2, d1, d, p, dl)

        def eps0(p, dl):
            return dg.ols_bound(kappa2, d0, d, p, dl)

        bounds["ols"] = dg.ols_bound(kappa2, delta2bar, d, probs.pi_R, delta)
        bounds["theorem1_ols"] = dg.theorem1_bound(dg.BoundInputs(eps1, eps0, delta, probs))
        if resid is not None:
            bounds["final_gap_ols"] = dg.final_gap_bound(resid, probs, eps1, eps0, delta)
    if args.sparsity is not None and d >= 2:
        gamma = args.re_gamma
        if gamma is None and d <= 12:
            support = range(min(args.sparsity, d))
            gamma = dg.re_constant_probe(X, support, 2000, np.random.Generator(np.random.Philox(args.seed)))
        if gamma is not None:
            mask = T == 1
            y_inf = float(np.max(np.abs(y)))
            lam = args.lam if args.lam is not None else default_lambda(X, y, TrainingSubset(mask, pi_T), y_inf)
            bounds["lasso"] = dg.lasso_bound(
                float(np.max(np.abs(X))), y_inf, args.sparsity, d, gamma, n, probs.pi_R, lam, delta
            )
            bounds["re_gamma_upper"] = gamma
    out["bounds"] = bounds
    entropy = dg.EntropySpec("polynomial", alpha=args.entropy_alpha, c=args.entropy_c)
    cr = dg.critical_radius(entropy, n, probs.pi_R, delta)
    out["critical_radius"] = {
        "r": cr.r,
        "bracket": list(cr.bracket),
        "residual": cr.residual,
        "entropy_alpha": args.entropy_alpha,
        "entropy_c": args.entropy_c,
    }
    print(dumps(out))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="decorradj", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a Monte Carlo sweep from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=".", help="output directory (default: current)")
    s.add_argument("--raw", action="store_true", help="also write raw_reports.jsonl")
    s.add_argument("--plot", action="store_true", help="render PNG figures next to metrics.csv")
    s.add_argument("--threads", type=int, default=None, help="override the config thread count")
    s.set_defaults(func=cmd_simulate)

    def common(q):
        q.add_argument("--data", required=True)
        q.add_argument("--pi-t", type=float, default=None, dest="pi_t")
        q.add_argument("--pi-r", type=float, default=None, dest="pi_r")
        q.add_argument("--pi-rbar", type=float, default=None, dest="pi_rbar")
        q.add_argument("--seed", type=int, default=0, help="seed of the quadruple draw")
        q.add_argument("--lambda", type=float, default=None, dest="lam")
        q.add_argument("--no-intercept", action="store_true", dest="no_intercept",
                       help="do not prepend a column of ones to the covariates")

    e = sub.add_parser("estimate", help="one estimator on observed data")
    common(e)
    e.add_argument("--method", required=True)
    e.add_argument("--backend", default="ols", choices=BACKENDS)
    e.add_argument("--y-inf", type=float, default=None, dest="y_inf")
    e.add_argument("--smoothness", type=float, default=None, help="alpha for regressogram backends")
    e.add_argument("--alpha-level", type=float, default=0.05, dest="alpha_level")
    e.set_defaults(func=cmd_estimate)

    g = sub.add_parser("diagnose", help="leverage, uniformity, bounds and critical radius")
    common(g)
    g.add_argument("--delta", type=float, default=0.05)
    g.add_argument("--entropy-alpha", type=float, default=1.0, dest="entropy_alpha")
    g.add_argument("--entropy-c", type=float, default=1.0, dest="entropy_c")
    g.add_argument("--sparsity", type=int, default=None)
    g.add_argument("--re-gamma", type=float, default=None, dest="re_gamma")
    g.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except est.InformationBarrierError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
