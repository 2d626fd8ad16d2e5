"""Simulation, benchmark and rate experiments behind the CLI."""

import csv
import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .compression import DEFAULT_ORDER, empirical_measure, gauss_quadrature
from .estimators import hellinger_sq, log_likelihood, sse_posterior_mean
from .models import PointMass, UniformPrior, make_model, sample_mixture
from .solver import DEFAULT_GRID_SIZE, DEFAULT_TOL, build_grid, fit_npmle

__all__ = [
    "BenchRecord",
    "parse_prior",
    "simulate",
    "bench_once",
    "run_bench",
    "summarize_bench",
    "run_rate",
    "write_csv",
]


@dataclass
class BenchRecord:
    method: str
    n: int
    J: object
    grid_size: int
    seed: int
    preprocess: float
    solve: float
    total: float
    loglik: float
    sse: float
    certificate_gap: float
    converged: bool
    em_min_increment: float

    def row(self):
        return asdict(self)


def parse_prior(spec):
    """``uniform:a,b`` or ``point:c`` (default ``uniform:-2,2``)."""
    kind, _, args = str(spec).partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    if kind == "uniform":
        return UniformPrior(*(vals or [-2.0, 2.0]))
    if kind == "point":
        return PointMass(vals[0] if vals else 0.0)
    raise ValueError(f"unknown prior {spec!r}")


def simulate(model, prior, n, seed, s2_levels=None):
    """Draw a sample; with ``s2_levels`` each row gets a random known variance.

    Returns ``(columns, theta)`` where ``columns`` maps column name to array.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if s2_levels is None:
        x, theta = sample_mixture(model, prior, n, seed)
        return {"x": x}, theta
    rng = np.random.default_rng(seed)
    theta = prior.sample(n, rng)
    s2 = rng.choice(np.asarray(s2_levels, dtype=float), size=n)
    x = theta + np.sqrt(s2) * rng.standard_normal(n)
    return {"x": x, "s2": s2}, theta


def bench_once(n, J, grid_size, seed, tol=DEFAULT_TOL, prior=None):
    """One repetition: full fit on ``P_n`` then the order-``J`` compressed fit."""
    model = make_model("gl")
    prior = prior or UniformPrior(-2.0, 2.0)
    x, theta = sample_mixture(model, prior, n, seed)
    grid = build_grid(model, x, grid_size)
    records, fits = [], {}
    for method in ("full", "compressed"):
        t0 = time.perf_counter()
        measure = empirical_measure(x)
        if method == "compressed":
            measure = gauss_quadrature(measure, J).measure
        t1 = time.perf_counter()
        g, rep = fit_npmle(model, measure, grid, tol=tol, order=J if method == "compressed" else "full")
        t2 = time.perf_counter()
        fits[method] = (g, rep)
        records.append(BenchRecord(
            method=method, n=n, J=J if method == "compressed" else 0, grid_size=grid_size, seed=seed,
            preprocess=t1 - t0, solve=t2 - t1, total=t2 - t0,
            loglik=log_likelihood(model, g, x), sse=sse_posterior_mean(model, g, x, theta),
            certificate_gap=rep.certificate_gap, converged=rep.converged,
            em_min_increment=rep.em_min_increment,
        ))
    return records, fits


def _bench_rep(args):
    return bench_once(*args)[0]


def run_bench(n=100_000, J=DEFAULT_ORDER, grid_size=DEFAULT_GRID_SIZE, reps=10, seed=0,
              tol=DEFAULT_TOL, jobs=1, on_record=None):
    """Repetitions ``seed, seed + 1, ...``; returns the flat record list.

    ``jobs > 1`` runs repetitions in worker processes (each repetition still
    times its own stages serially).
    """
    tasks = [(n, J, grid_size, seed + r, tol) for r in range(reps)]
    out = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for recs in ex.map(_bench_rep, tasks):
                out.extend(recs)
                if on_record:
                    on_record(out)
    else:
        for t in tasks:
            out.extend(_bench_rep(t))
            if on_record:
                on_record(out)
    return out


def _stats(vals):
    return {"mean": statistics.fmean(vals), "median": statistics.median(vals)}


def summarize_bench(records):
    summary = {}
    for method in ("full", "compressed"):
        rs = [r for r in records if r.method == method]
        if rs:
            summary[method] = {k: _stats([getattr(r, k) for r in rs])
                               for k in ("preprocess", "solve", "total", "loglik", "sse")}
    full = [r for r in records if r.method == "full"]
    comp = [r for r in records if r.method == "compressed"]
    if full and comp:
        pairs = list(zip(full, comp))
        summary["paired"] = {
            "loglik_gap": _stats([f.loglik - c.loglik for f, c in pairs]),
            "sse_rel_diff": _stats([abs(c.sse - f.sse) / f.sse for f, c in pairs]),
            "solve_speedup": _stats([f.solve / c.solve for f, c in pairs]),
            "total_speedup": _stats([f.total / c.total for f, c in pairs]),
        }
    return summary


def write_csv(path, rows, fields=None):
    rows = list(rows)
    fields = fields or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def write_bench_outputs(outdir, records):
    """Record table (CSV, JSON) and one plot-data CSV per compared quantity."""
    os.makedirs(outdir, exist_ok=True)
    rows = [r.row() for r in records]
    write_csv(os.path.join(outdir, "bench_records.csv"), rows, list(BenchRecord.__dataclass_fields__))
    with open(os.path.join(outdir, "bench.json"), "w") as fh:
        json.dump({"records": rows, "summary": summarize_bench(records)}, fh, indent=2)
    for name, key in (("time", "total"), ("loglik", "loglik"), ("sse", "sse")):
        write_csv(
            os.path.join(outdir, f"plot_{name}.csv"),
            [{"seed": r.seed, "method": r.method, key: getattr(r, key)} for r in records],
            ["seed", "method", key],
        )


def run_rate(ns=(1000, 3000, 10_000, 30_000), reps=10, seed=0, J=DEFAULT_ORDER,
             grid_size=DEFAULT_GRID_SIZE, prior=None, tol=DEFAULT_TOL):
    """``H^2(f_fit, f_true) n / (log n)^2`` for compressed fits on GL data."""
    model = make_model("gl")
    prior = prior or UniformPrior(-2.0, 2.0)
    rows = []
    for n in ns:
        for r in range(reps):
            s = seed + r
            x, _ = sample_mixture(model, prior, n, s)
            grid = build_grid(model, x, grid_size)
            measure = empirical_measure(x)
            if J:
                measure = gauss_quadrature(measure, J).measure
            row = {"n": n, "rep": r, "seed": s, "h2": math.nan, "normalized": math.nan, "error": ""}
            try:
                g, _ = fit_npmle(model, measure, grid, tol=tol)
                h2 = hellinger_sq(model, g, prior)
                row.update(h2=h2, normalized=h2 * n / math.log(n) ** 2)
            except (RuntimeError, ArithmeticError) as exc:
                row["error"] = str(exc)
            rows.append(row)
    return rows


def rate_medians(rows):
    out = {}
    for n in sorted({r["n"] for r in rows}):
        vals = [r["normalized"] for r in rows if r["n"] == n and not math.isnan(r["normalized"])]
        out[n] = statistics.median(vals) if vals else math.nan
    return out
