"""``efnpmle`` command-line interface.

Exit codes: 0 success, 2 invalid input or configuration, 3 numeric failure.
A ``--config`` file holds flat ``key = value`` lines using the long flag
names (dashes or underscores); explicit flags take precedence.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import kernels
from .compression import QuadratureError, compress
from .estimators import IntegrationError, log_mixture_density, posterior_mean
from .experiments import (
    parse_prior,
    rate_medians,
    run_bench,
    run_rate,
    simulate,
    summarize_bench,
    write_bench_outputs,
    write_csv,
)
from .hetero import DEFAULT_HETERO_ORDER, DEFAULT_T0, HeteroObservation, fit_hetero, hetero_log_density, hetero_posterior_mean
from .models import DomainError, ExpFamilyModel, make_model
from .solver import DEFAULT_GRID_SIZE, DEFAULT_TOL, MixingDistribution, fit_compressed
from .theory import (
    TheoryConstants,
    hetero_delta,
    jn_hetero,
    jn_theorem1,
    kappa_sup,
    solver_tolerance_for,
    support_bound,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


def load_config(path):
    cfg = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg[k.replace("-", "_")] = v
    return cfg


# -- I/O helpers ----------------------------------------------------------------

def read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    if "x" not in rows[0]:
        raise ValueError(f"{path}: missing column 'x'")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def write_columns(path, cols):
    keys = list(cols)
    n = len(cols[keys[0]])
    write_csv(path, ({k: float(cols[k][i]) for k in keys} for i in range(n)), keys)


def dump_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=True)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _model(args):
    params = {}
    if args.model == "sc":
        params = {"nu": int(args.nu), "sigma2": float(args.sigma2)}
    return make_model(args.model, params, float(args.M))


# -- commands -------------------------------------------------------------------

def cmd_simulate(args):
    model = _model(args)
    levels = [float(s) for s in args.s2_levels.split(",")] if args.hetero else None
    cols, theta = simulate(model, parse_prior(args.prior), int(args.n), int(args.seed), levels)
    out = args.output or "data.csv"
    write_columns(out, cols)
    latent = args.latent or os.path.splitext(out)[0] + "_latent.csv"
    write_columns(latent, {"theta": theta})
    return EXIT_OK


def cmd_compress(args):
    cols = read_columns(args.input)
    data = np.column_stack([cols["x"], 1.0 / cols["s2"]]) if args.hetero else cols["x"]
    rule = compress(data, int(args.order))
    m = rule.measure
    out = {
        "construction": rule.construction.value,
        "order": rule.order,
        "sample_size": m.sample_size,
        "atoms": m.atoms.tolist(),
        "weights": m.weights.tolist(),
        "max_moment_residual": float(np.max(rule.moment_residuals)) if rule.moment_residuals.size else 0.0,
    }
    dump_json(out, args.output)
    return EXIT_OK


def cmd_plan(args):
    model = _model(args)
    if args.input:
        x = read_columns(args.input)["x"]
        n, x_abs = x.shape[0], float(np.max(np.abs(x)))
    else:
        if args.n is None or args.x_abs_max is None:
            raise ConfigError("plan needs --input or both --n and --x-abs-max")
        n, x_abs = int(args.n), float(args.x_abs_max)
    consts = TheoryConstants(C_universal=float(args.C), C_T0=float(args.C_T0), gamma=float(args.gamma))
    plan = {"n": n, "x_abs_max": x_abs, "constants": consts.to_dict()}
    if args.hetero:
        delta = hetero_delta(n, consts.gamma, x_abs)
        jt = jn_hetero(x_abs, float(args.M), float(args.T0), consts.gamma, n, consts.C_T0)
        plan.update(jn_theory=jt, jn_recommended=min(jt, DEFAULT_HETERO_ORDER), delta_per_sample=delta)
    else:
        delta = float(args.delta) if args.delta is not None else 1.0
        M_n = support_bound(model, x_abs)
        ks = kappa_sup(model, M_n)
        plan.update(M_n=M_n, kappa_sup=ks, delta_n=delta)
        try:
            jt = jn_theorem1(x_abs, M_n, ks, delta, n, consts.C_universal)
        except ValueError as exc:
            jt, plan["jn_theory_note"] = None, str(exc)
        plan["jn_theory"] = jt
        plan["jn_recommended"] = min(jt or 1, 40)
        plan["solver_tol"] = solver_tolerance_for(delta, n)
    dump_json(plan, args.output)
    return EXIT_OK


def cmd_fit(args):
    cols = read_columns(args.input)
    tol = float(args.tol)
    if args.hetero:
        if "s2" not in cols:
            raise ValueError("hetero fit needs column 's2'")
        order = DEFAULT_HETERO_ORDER if args.order is None else int(args.order)
        obs = HeteroObservation(cols["x"], cols["s2"], T0=float(args.T0))
        g, rep = fit_hetero(obs, J=order, grid_size=int(args.grid_size), tol=tol, M=float(args.M),
                            algorithm=args.algorithm)
        model_d = {"kind": "hetero", "T0": float(args.T0)}
    else:
        model = _model(args)
        order = 25 if args.order is None else int(args.order)
        gopts = {"grid_size": int(args.grid_size), "mode": args.grid_mode}
        if args.grid_mode == "explicit":
            if not args.grid_interval:
                raise ValueError("--grid-mode explicit needs --grid-interval lo,hi")
            gopts["interval"] = [float(v) for v in args.grid_interval.split(",")]
        g, rep = fit_compressed(model, cols["x"], J=order, tol=tol, grid_options=gopts,
                                algorithm=args.algorithm)
        model_d = model.to_dict()
    dump_json({"model": model_d, "mixing": g.to_dict(), "report": rep.to_dict()}, args.output)
    if not rep.converged:
        print(f"warning: solver stopped with certificate gap {rep.certificate_gap:.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args):
    with open(args.fit) as fh:
        fit = json.load(fh)
    g = MixingDistribution.from_dict(fit["mixing"])
    cols = read_columns(args.input)
    x = cols["x"]
    if fit["model"]["kind"] == "hetero":
        if "s2" not in cols:
            raise ValueError("hetero model needs column 's2'")
        tau = 1.0 / cols["s2"]
        dens, pm = np.exp(hetero_log_density(g, x, tau)), hetero_posterior_mean(g, x, tau)
    else:
        model = ExpFamilyModel.from_dict(fit["model"])
        dens, pm = np.exp(log_mixture_density(model, g, x)), posterior_mean(model, g, x)
    write_columns(args.output or "eval.csv", {"x": x, "density": dens, "posterior_mean": pm})
    return EXIT_OK


def cmd_bench(args):
    outdir = args.output or "bench_out"
    records = run_bench(
        n=int(args.n or 100_000), J=int(args.order or 25), grid_size=int(args.grid_size),
        reps=int(args.reps), seed=int(args.seed), tol=float(args.tol),
        jobs=1 if args.deterministic else int(args.jobs),
        on_record=lambda recs: write_bench_outputs(outdir, recs),
    )
    write_bench_outputs(outdir, records)
    dump_json(summarize_bench(records), None)
    return EXIT_OK


def cmd_rate(args):
    ns = [int(float(v)) for v in str(args.ns).split(",")]
    rows = run_rate(ns=ns, reps=int(args.reps), seed=int(args.seed), J=int(args.order or 25),
                    grid_size=int(args.grid_size), prior=parse_prior(args.prior), tol=float(args.tol))
    write_csv(args.output or "rate.csv", rows, ["n", "rep", "seed", "h2", "normalized", "error"])
    dump_json({"median_normalized": {str(k): v for k, v in rate_medians(rows).items()}}, None)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "compress": cmd_compress,
    "plan": cmd_plan,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "rate": cmd_rate,
}


# -- parser ---------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--model", choices=["gl", "sc", "poisson"], default="gl")
    p.add_argument("--nu", type=int, default=2)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--M", "--m-radius", dest="M", default="inf",
                   help="known support radius of the mixing distribution")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="serial fixed-order reductions and sequential repetitions")
    p.add_argument("--order", type=int, default=None, help="compression order J (0 = none)")
    p.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--hetero", action="store_true")
    p.add_argument("--T0", type=float, default=DEFAULT_T0)


def build_parser():
    parser = argparse.ArgumentParser(prog="efnpmle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    ps = {name: sub.add_parser(name) for name in COMMANDS}
    for p in ps.values():
        _common(p)
    ps["simulate"].add_argument("--n", type=int, default=100_000)
    ps["simulate"].add_argument("--prior", default="uniform:-2,2")
    ps["simulate"].add_argument("--latent")
    ps["simulate"].add_argument("--s2-levels", default="0.5,1,2")
    ps["plan"].add_argument("--n", type=int)
    ps["plan"].add_argument("--x-abs-max", type=float)
    ps["plan"].add_argument("--delta", type=float)
    ps["plan"].add_argument("--C", type=float, default=1.0)
    ps["plan"].add_argument("--C-T0", type=float, default=1.0)
    ps["plan"].add_argument("--gamma", type=float, default=1.0)
    ps["fit"].add_argument("--algorithm", choices=["cnm", "vem", "em"], default="cnm")
    ps["fit"].add_argument("--grid-mode", choices=["data_range", "support_bound", "explicit"],
                           default="data_range")
    ps["fit"].add_argument("--grid-interval", help="lo,hi for --grid-mode explicit")
    ps["eval"].add_argument("--fit", required=True, help="JSON written by 'fit'")
    ps["bench"].add_argument("--n", type=int)
    ps["bench"].add_argument("--reps", type=int, default=10)
    ps["bench"].add_argument("--jobs", type=int, default=1)
    ps["rate"].add_argument("--ns", default="1000,3000,10000,30000")
    ps["rate"].add_argument("--reps", type=int, default=10)
    ps["rate"].add_argument("--prior", default="uniform:-2,2")
    return parser, ps


def parse_args(argv=None):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = load_config(args.config)
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        typed = {}
        for a in sp._actions:
            if a.dest in cfg:
                v = cfg[a.dest]
                if isinstance(a, argparse._StoreTrueAction):
                    typed[a.dest] = v.lower() in ("1", "true", "yes", "on")
                else:
                    typed[a.dest] = a.type(v) if a.type else v
        sp.set_defaults(**typed)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.deterministic:
        kernels.set_deterministic(True)
    try:
        return COMMANDS[args.command](args)
    except (QuadratureError, IntegrationError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
