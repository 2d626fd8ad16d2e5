"""Grid-discretized NPMLE for a weighted discrete data measure.

The same code path fits the full NPMLE (weights from the empirical measure)
and the compressed one (weights from a quadrature rule): both maximize

    Phi(g) = sum_j w_j log(sum_k g_k L_jk)

over the probability simplex on a fixed grid. Optimality is certified by the
dual gap ``log max_k d_k`` with ``d_k = sum_j w_j L_jk / f_j``, which bounds
``sup Phi - Phi(g)`` from above.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, nnls

from . import kernels
from .compression import (
    DEFAULT_ORDER,
    Construction,
    counting_compress,
    empirical_measure,
    gauss_quadrature,
)
from .models import DomainError
from .theory import solver_tolerance_for, support_bound

__all__ = [
    "MixingDistribution",
    "FitReport",
    "build_grid",
    "likelihood_matrix",
    "dual_gap_certificate",
    "solve_mixture_weights",
    "fit_npmle",
    "fit_compressed",
    "DEFAULT_GRID_SIZE",
    "DEFAULT_TOL",
]

DEFAULT_GRID_SIZE = 300
DEFAULT_TOL = 1e-8
ALGORITHMS = ("cnm", "vem", "em")


@dataclass(frozen=True, eq=False)
class MixingDistribution:
    """Simplex weights over a sorted grid of mixing parameters."""

    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if grid.shape != w.shape or grid.ndim != 1:
            raise ValueError("grid and weights must be 1-D arrays of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a probability vector")
        if np.any(np.diff(grid) < 0):
            raise ValueError("grid must be sorted")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, theta):
        return cls(np.array([float(theta)]), np.array([1.0]))

    def support(self, threshold=0.0):
        keep = self.weights > threshold
        return self.grid[keep], self.weights[keep]

    def support_range(self):
        theta, _ = self.support()
        return float(theta.min()), float(theta.max())

    def mean(self):
        return float(np.dot(self.grid, self.weights))

    def to_dict(self):
        return {"grid": self.grid.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["grid"], float), np.asarray(d["weights"], float))


@dataclass
class FitReport:
    objective: float
    certificate_gap: float
    converged: bool
    iterations: dict
    wall_times: dict
    algorithm: str
    order: object
    tol: float
    sample_size: int
    n_rows: int
    trace: np.ndarray = field(repr=False)
    em_min_increment: float = math.inf
    construction: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "objective": self.objective,
            "certificate_gap": self.certificate_gap,
            "converged": self.converged,
            "iterations": dict(self.iterations),
            "wall_times": dict(self.wall_times),
            "algorithm": self.algorithm,
            "order": self.order,
            "tol": self.tol,
            "sample_size": self.sample_size,
            "n_rows": self.n_rows,
            "em_min_increment": None if math.isinf(self.em_min_increment) else self.em_min_increment,
            "construction": self.construction,
            **({"extra": dict(self.extra)} if self.extra else {}),
        }


# ---------------------------------------------------------------------------
# grid and likelihood matrix
# ---------------------------------------------------------------------------

def _data_range(data_or_range):
    arr = np.asarray(data_or_range, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty data")
    return float(arr.min()), float(arr.max())


def build_grid(model, data_or_range, grid_size=DEFAULT_GRID_SIZE, mode="data_range", M_n=None):
    """Uniform grid of mixing parameters.

    ``data_range`` maps ``[min X, max X]`` through ``kappa'^{-1}`` (the
    identity for the Gaussian location model) and clips to ``[-M, M]``.
    ``support_bound`` uses ``[-M_n, M_n]`` with ``M_n`` from
    :func:`efnpmle.theory.support_bound` unless given. ``explicit`` takes the
    interval as given.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    lo_x, hi_x = _data_range(data_or_range)
    if mode == "explicit":
        lo, hi = lo_x, hi_x
    elif mode == "support_bound":
        if M_n is None:
            M_n = support_bound(model, max(abs(lo_x), abs(hi_x)))
        lo, hi = -M_n, M_n
    elif mode == "data_range":
        mlo, mhi = model.mean_range()
        floor = 1e-3 * max(hi_x, 1.0)
        if lo_x <= mlo:
            lo_x = mlo + floor if math.isfinite(mlo) else lo_x
        if hi_x <= mlo:
            hi_x = lo_x
        lo = float(model.kappa_prime_inverse(lo_x))
        hi = float(model.kappa_prime_inverse(hi_x))
    else:
        raise ValueError(f"unknown grid mode {mode!r}")
    M = model.support_radius
    lo, hi = max(lo, -M), min(hi, M)
    if lo > hi or lo >= model.theta_upper or hi <= model.theta_lower:
        raise DomainError("grid interval does not meet the parameter space")
    if hi >= model.theta_upper:
        raise DomainError("grid reaches the boundary of the canonical domain")
    return np.unique(np.linspace(lo, hi, int(grid_size)))


def likelihood_matrix(model, measure, grid):
    """Row-shifted likelihood-ratio matrix.

    Returns ``(L, shift)`` with ``L_jk = exp(theta_k x_j - kappa(theta_k) - s_j)``
    and ``s_j = max_k (theta_k x_j - kappa(theta_k))``, so ``0 < L <= 1``.
    """
    grid = np.ascontiguousarray(grid, dtype=float)
    kap = np.ascontiguousarray(model.kappa(grid), dtype=float)
    x = np.ascontiguousarray(getattr(measure, "atoms", measure), dtype=float)
    L, shift = kernels.ef_loglik_matrix(x, grid, kap)
    if not (np.all(np.isfinite(shift)) and np.all(np.isfinite(L))):
        raise FloatingPointError("non-finite exponent in likelihood matrix")
    return L, shift


def dual_gap_certificate(L, weights, g):
    """Upper bound ``log max_k d_k`` on ``sup_g' Phi(g') - Phi(g)``."""
    L = np.asarray(L, dtype=float)
    f = L @ np.asarray(g, dtype=float)
    if np.any(f <= 0):
        raise ValueError("mixture density vanishes at some atom (degenerate g)")
    d = (np.asarray(weights, dtype=float) / f) @ L
    return max(0.0, math.log(d.max()))


# ---------------------------------------------------------------------------
# solver core
# ---------------------------------------------------------------------------

class _State:
    __slots__ = ("g", "f", "d", "phi")

    def __init__(self, L, w, g):
        self.g = g
        self.refresh(L, w)

    def refresh(self, L, w):
        self.f, self.d = kernels.mixture_matvecs(L, self.g, w)
        self.phi = _phi(self.f, w)

    @property
    def gap(self):
        return math.log(self.d.max())


def _phi(f, w):
    with np.errstate(divide="ignore"):
        return float(np.dot(w, np.log(f)))


def _initial_weights(K, algorithm):
    if algorithm == "cnm" and K > 10:
        g = np.zeros(K)
        g[np.unique(np.linspace(0, K - 1, 10).round().astype(int))] = 1.0
    else:
        g = np.ones(K)
    return g / g.sum()


def _em_step(L, w, st):
    g = st.g * st.d
    st.g = g / g.sum()
    st.refresh(L, w)


def _exchange_step(L, w, st):
    """Vertex exchange with exact line search; False if no move is possible."""
    i = int(np.argmax(st.d))
    support = np.flatnonzero(st.g > 0)
    j = int(support[np.argmin(st.d[support])])
    if i == j or st.d[i] <= st.d[j]:
        return False
    delta = L[:, i] - L[:, j]
    f, gj = st.f, st.g[j]

    def slope(t):
        return float(np.dot(w, delta / (f + t * delta)))

    if slope(gj) >= 0:
        t = gj
    else:
        t = brentq(slope, 0.0, gj, xtol=1e-15 * max(gj, 1e-300), rtol=4 * np.finfo(float).eps)
    g = st.g.copy()
    g[i] += t
    g[j] = 0.0 if t == gj else g[j] - t
    st.g = g / g.sum()
    st.refresh(L, w)
    return True


_SUM_ROW_WEIGHT = 1e3


def _local_maxima(d):
    K = d.shape[0]
    left = np.empty(K, bool)
    right = np.empty(K, bool)
    left[0] = True
    right[-1] = True
    left[1:] = d[1:] >= d[:-1]
    right[:-1] = d[:-1] >= d[1:]
    return np.flatnonzero(left & right & (d > 1.0))


def _newton_step(L, w, st):
    """Fully corrective constrained-Newton step on the active set.

    The quadratic model of ``Phi`` in the ratios ``r_j = (L g')_j / f_j`` is
    maximized by NNLS of ``sqrt(w) r`` onto ``2 sqrt(w)``; the result is
    normalized and accepted with backtracking (Armijo). Returns False if no
    ascent was found.
    """
    S = np.union1d(np.flatnonzero(st.g > 0), _local_maxima(st.d))
    S = np.union1d(S, [int(np.argmax(st.d))])
    sw = np.sqrt(w)
    A = L[:, S] * (sw / st.f)[:, None]
    Q, R = np.linalg.qr(A)
    # sum-to-one enters as a heavily weighted extra row
    R = np.vstack([R, np.full(S.size, _SUM_ROW_WEIGHT)])
    rhs = np.append(Q.T @ (2.0 * sw), _SUM_ROW_WEIGHT)
    try:
        gs, _ = nnls(R, rhs, maxiter=50 * S.size)
    except RuntimeError:
        return False
    total = gs.sum()
    if not total > 0:
        return False
    gs /= total
    target = np.zeros_like(st.g)
    target[S] = gs
    slope = float(np.dot(gs, st.d[S])) - 1.0
    if not slope > 0:
        return False
    f_target = L[:, S] @ gs
    t = 1.0
    while t > 1e-10:
        f_t = st.f + t * (f_target - st.f)
        if np.all(f_t > 0):
            phi_t = _phi(f_t, w)
            if phi_t >= st.phi + 0.25 * t * slope:
                g = st.g + t * (target - st.g)
                g[g < 0] = 0.0
                st.g = g / g.sum()
                st.refresh(L, w)
                return True
        t *= 0.5
    return False


def solve_mixture_weights(
    L,
    w,
    tol=DEFAULT_TOL,
    max_em=50_000,
    max_exchange=2_000,
    algorithm="cnm",
    exchange_every=100,
    em_per_round=1,
    g0=None,
):
    """Maximize ``sum_j w_j log (L g)_j`` over the simplex.

    Algorithms: ``em`` (multiplicative EM only), ``vem`` (EM with a vertex
    exchange every ``exchange_every`` EM steps) and ``cnm`` (constrained
    Newton on the active set, each round followed by ``em_per_round`` EM
    steps; vertex exchange when Newton stalls). All stop as soon as the dual
    gap is ``<= tol``.

    Returns ``(g, info)`` where ``info`` carries the gap, counts and traces.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    L = np.ascontiguousarray(L, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("data weights must be strictly positive")
    m, K = L.shape
    g = _initial_weights(K, algorithm) if g0 is None else np.asarray(g0, float) / np.sum(g0)
    st = _State(L, w, g)
    trace = [st.phi]
    counts = {"em": 0, "exchange": 0, "newton": 0}
    em_min = math.inf

    def em():
        nonlocal em_min
        before = st.phi
        _em_step(L, w, st)
        counts["em"] += 1
        em_min = min(em_min, st.phi - before)
        trace.append(st.phi)

    while st.gap > tol:
        if algorithm == "cnm":
            if counts["newton"] + counts["exchange"] >= max_exchange or counts["em"] >= max_em:
                break
            if _newton_step(L, w, st):
                counts["newton"] += 1
            elif _exchange_step(L, w, st):
                counts["exchange"] += 1
            trace.append(st.phi)
            for _ in range(em_per_round):
                if st.gap <= tol:
                    break
                em()
        else:
            if counts["em"] >= max_em:
                break
            if (
                algorithm == "vem"
                and counts["em"] > 0
                and counts["em"] % exchange_every == 0
                and counts["exchange"] < max_exchange
                and _exchange_step(L, w, st)
            ):
                counts["exchange"] += 1
                trace.append(st.phi)
                if st.gap <= tol:
                    break
            em()

    gap = max(0.0, st.gap)
    info = {
        "gap": gap,
        "converged": gap <= tol,
        "iterations": counts,
        "trace": np.array(trace),
        "em_min_increment": em_min,
        "phi": st.phi,
    }
    return st.g, info


# ---------------------------------------------------------------------------
# public fits
# ---------------------------------------------------------------------------

def fit_npmle(
    model,
    measure,
    grid,
    tol=DEFAULT_TOL,
    max_em=50_000,
    max_exchange=2_000,
    algorithm="cnm",
    exchange_every=100,
    order="full",
):
    """Grid NPMLE of a weighted 1-D data measure under ``model``.

    Returns ``(MixingDistribution, FitReport)``. The report's ``objective`` is
    ``sum_j w_j log l_g(x_j)`` per unit mass; ``certificate_gap`` bounds the
    distance to the grid optimum in the same units.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if np.any(measure.weights <= 0):
        raise ValueError("measure has zero-weight atoms")
    model.check_support(measure.atoms)
    grid = np.sort(np.asarray(grid, dtype=float))
    model.kappa(grid)
    t0 = time.perf_counter()
    L, shift = likelihood_matrix(model, measure, grid)
    t1 = time.perf_counter()
    g, info = solve_mixture_weights(
        L, measure.weights, tol=tol, max_em=max_em, max_exchange=max_exchange,
        algorithm=algorithm, exchange_every=exchange_every,
    )
    t2 = time.perf_counter()
    report = _report(info, measure, shift, algorithm, order, tol, t1 - t0, t2 - t1)
    return MixingDistribution(grid, g), report


def _report(info, measure, shift, algorithm, order, tol, t_build, t_solve):
    offset = float(np.dot(measure.weights, shift))
    return FitReport(
        objective=info["phi"] + offset,
        certificate_gap=info["gap"],
        converged=info["converged"],
        iterations=info["iterations"],
        wall_times={"matrix_build": t_build, "solve": t_solve},
        algorithm=algorithm,
        order=order,
        tol=tol,
        sample_size=measure.sample_size,
        n_rows=len(measure),
        trace=info["trace"] + offset,
        em_min_increment=info["em_min_increment"],
    )


def fit_compressed(
    model,
    data,
    J=DEFAULT_ORDER,
    grid_options=None,
    tol=DEFAULT_TOL,
    delta_n=None,
    **solver_options,
):
    """Compress the data, then fit the NPMLE on the compressed measure.

    ``J = 0`` (or ``None``) skips compression. Integer data use exact counting
    compression, other data an order-``J`` Gaussian quadrature. When
    ``delta_n`` is given, the solver tolerance becomes ``delta_n / (2 n)``.
    The grid is built from the raw data via :func:`build_grid`.
    """
    data = model.check_support(np.asarray(data, dtype=float).ravel())
    n = data.shape[0]
    if delta_n is not None:
        tol = solver_tolerance_for(delta_n, n)
    opts = {"grid_size": DEFAULT_GRID_SIZE, "mode": "data_range"}
    opts.update(grid_options or {})
    interval = opts.pop("interval", None)
    grid = build_grid(model, data if interval is None else interval, **opts)
    t0 = time.perf_counter()
    measure = empirical_measure(data)
    if not J:
        rule_measure, order, construction = measure, "full", None
    else:
        if np.all(data == np.floor(data)) and np.all(data >= 0):
            rule = counting_compress(data)
        else:
            rule = gauss_quadrature(measure, int(J))
        rule_measure, order, construction = rule.measure, int(J), rule.construction
    t1 = time.perf_counter()
    g, report = fit_npmle(model, rule_measure, grid, tol=tol, order=order, **solver_options)
    report.wall_times["compress"] = t1 - t0
    report.wall_times["total"] = (t1 - t0) + report.wall_times["matrix_build"] + report.wall_times["solve"]
    report.construction = None if construction is None else Construction(construction).value
    return g, report
