"""Heteroscedastic Gaussian sequence model.

``X_i ~ N(theta_i, sigma_i^2)`` with known variances and ``theta_i ~ g``.
Fitting works on the joint empirical measure of ``(x, tau)`` pairs, with
``tau = 1 / sigma^2``; compression subsamples that cloud by Tchakaloff.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .compression import empirical_measure, tchakaloff_compress
from .models import DomainError
from .solver import DEFAULT_GRID_SIZE, DEFAULT_TOL, MixingDistribution, _report, solve_mixture_weights

__all__ = [
    "HeteroObservation",
    "DEFAULT_T0",
    "DEFAULT_HETERO_ORDER",
    "hetero_log_density",
    "hetero_density",
    "hetero_log_likelihood",
    "hetero_posterior_mean",
    "fit_hetero",
]

DEFAULT_T0 = 10.0
DEFAULT_HETERO_ORDER = 8
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class HeteroObservation:
    """Observations with known variances; ``tau`` must lie in ``[1/T0, T0]``."""

    x: np.ndarray
    s2: np.ndarray
    T0: float = DEFAULT_T0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        s2 = np.broadcast_to(np.asarray(self.s2, dtype=float), x.shape).copy()
        if x.size == 0:
            raise ValueError("no observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s2))):
            raise DomainError("non-finite observation or variance")
        if not self.T0 >= 1:
            raise ValueError("T0 must be >= 1")
        if np.any(s2 <= 0):
            raise DomainError("variances must be positive")
        tau = 1.0 / s2
        band = (1.0 / self.T0, self.T0)
        if np.any(tau < band[0] * (1 - 1e-12)) or np.any(tau > band[1] * (1 + 1e-12)):
            raise DomainError(f"precision outside [{band[0]:g}, {band[1]:g}]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s2", s2)

    @property
    def tau(self):
        return 1.0 / self.s2

    def __len__(self):
        return self.x.shape[0]

    def pairs(self):
        return np.column_stack([self.x, self.tau])


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise DomainError("tau must be positive")
    return tau


def _kernel(g, x, tau):
    x = np.asarray(x, dtype=float)
    tau = _check_tau(tau)
    x, tau = np.broadcast_arrays(x, tau)
    theta, w = g.support()
    expo = -0.5 * tau[..., None] * np.subtract.outer(x, theta) ** 2 + np.log(w)
    return x, tau, theta, expo


def hetero_log_density(g, x, tau):
    """``log f_g(x | tau)``."""
    _, tau, _, expo = _kernel(g, x, tau)
    return 0.5 * np.log(tau) - _HALF_LOG_2PI + logsumexp(expo, axis=-1)


def hetero_density(g, x, tau):
    """``sqrt(tau / 2 pi) sum_k g_k exp(-tau (x - theta_k)^2 / 2)``."""
    return np.exp(hetero_log_density(g, x, tau))


def hetero_log_likelihood(g, x, tau):
    """Total ``sum_i log f_g(X_i | tau_i)``."""
    return math.fsum(np.ravel(hetero_log_density(g, x, tau)))


def hetero_posterior_mean(g, x, tau):
    """Posterior mean of ``theta`` given ``(x, tau)``."""
    _, _, theta, expo = _kernel(g, x, tau)
    expo = expo - expo.max(axis=-1, keepdims=True)
    p = np.exp(expo)
    return (p @ theta) / p.sum(axis=-1)


def hetero_grid(x, grid_size=DEFAULT_GRID_SIZE, M=math.inf):
    """Evenly spaced grid on ``[-(|X|_n ^ M), |X|_n ^ M]``."""
    r = min(float(np.max(np.abs(x))), float(M))
    if r == 0:
        return np.array([0.0])
    return np.unique(np.linspace(-r, r, int(grid_size)))


def fit_hetero(
    observations,
    J=DEFAULT_HETERO_ORDER,
    grid_size=DEFAULT_GRID_SIZE,
    tol=DEFAULT_TOL,
    M=math.inf,
    grid=None,
    **solver_options,
):
    """NPMLE for heteroscedastic Gaussian data, optionally compressed.

    ``J = 0`` fits the full joint empirical measure. Otherwise the ``(x, tau)``
    cloud is subsampled to match all moments of total degree ``<= J``.
    The report's ``objective`` is ``sum_j w_j log f_g(x_j | tau_j)`` per unit
    mass.
    """
    if not isinstance(observations, HeteroObservation):
        x, s2 = observations
        observations = HeteroObservation(x, s2)
    if J is None or J < 0:
        raise ValueError("J must be >= 0")
    if grid is None:
        grid = hetero_grid(observations.x, grid_size, M)
    grid = np.sort(np.asarray(grid, dtype=float))
    t0 = time.perf_counter()
    measure = empirical_measure(observations.pairs())
    construction = None
    if J:
        rule = tchakaloff_compress(measure, int(J))
        measure, construction = rule.measure, rule.construction.value
    t1 = time.perf_counter()
    xs = np.ascontiguousarray(measure.atoms[:, 0])
    taus = np.ascontiguousarray(measure.atoms[:, 1])
    L, shift = kernels.hetero_loglik_matrix(xs, taus, grid)
    t2 = time.perf_counter()
    g, info = solve_mixture_weights(L, measure.weights, tol=tol, **solver_options)
    t3 = time.perf_counter()
    report = _report(
        info, measure, shift, solver_options.get("algorithm", "cnm"),
        int(J) if J else "full", tol, t2 - t1, t3 - t2,
    )
    report.wall_times["compress"] = t1 - t0
    report.wall_times["total"] = t3 - t0
    report.construction = construction
    report.extra = {"T0": observations.T0, "tau_range": [float(taus.min()), float(taus.max())]}
    return MixingDistribution(grid, g), report
