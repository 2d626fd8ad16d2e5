"""Quantities computed from a fitted mixing distribution.

Mixing distributions may be discrete (anything with ``grid``/``weights``) or
one of the analytic priors in :mod:`efnpmle.models`, which is what the
simulation oracles use for the true ``f_{g0}``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import log_ndtr, logsumexp

from .compression import DiscreteMeasure
from .models import ModelKind, PointMass, UniformPrior

__all__ = [
    "DensityEstimate",
    "IntegrationError",
    "log_mixture_density",
    "mixture_density",
    "log_likelihood",
    "likelihood_gap",
    "posterior_mean",
    "sse_posterior_mean",
    "hellinger_sq",
]

_LEGENDRE_NODES = 200
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class IntegrationError(RuntimeError):
    def __init__(self, message, estimate):
        super().__init__(f"{message} (estimate {estimate!r})")
        self.estimate = estimate


def _atoms(model, g):
    """Support points and weights of ``g``; analytic priors are discretized."""
    if isinstance(g, PointMass):
        return np.array([float(g.theta)]), np.array([1.0])
    if isinstance(g, UniformPrior):
        t, w = np.polynomial.legendre.leggauss(_LEGENDRE_NODES)
        half = 0.5 * (g.upper - g.lower)
        return g.lower + half * (t + 1.0), 0.5 * w
    theta = np.asarray(g.grid, dtype=float)
    w = np.asarray(g.weights, dtype=float)
    keep = w > 0
    return theta[keep], w[keep]


def _log_uniform_gl(x, a, b):
    # log of (Phi(x - a) - Phi(x - b)) / (b - a), computed on the tail side
    x = np.asarray(x, dtype=float)
    hi = np.where(x < 0.5 * (a + b), x - a, b - x)
    lo = np.where(x < 0.5 * (a + b), x - b, a - x)
    lhi, llo = log_ndtr(hi), log_ndtr(lo)
    return lhi + np.log1p(-np.exp(llo - lhi)) - math.log(b - a)


def log_mixture_density(model, g, x):
    """``log f_g(x)`` with respect to the model's reference measure."""
    x = model.check_support(x)
    if isinstance(g, UniformPrior) and model.kind is ModelKind.GAUSSIAN_LOCATION:
        return _log_uniform_gl(x, g.lower, g.upper)
    theta, w = _atoms(model, g)
    expo = np.multiply.outer(x, theta) - np.asarray(model.kappa(theta))
    expo += np.log(w)
    return model.log_base_density(x) + logsumexp(expo, axis=-1)


def mixture_density(model, g, x):
    """``f_g(x) = sum_k g_k p_{theta_k}(x)``."""
    return np.exp(log_mixture_density(model, g, x))


def _exact_count_sum(counts, vals):
    """Correctly rounded ``sum_k counts_k * vals_k`` for integer counts."""
    vals = np.asarray(vals, dtype=float)
    counts = np.asarray(counts)
    if counts.max() >= 2**26:
        from fractions import Fraction

        return float(sum(Fraction(int(c)) * Fraction(v) for c, v in zip(counts, vals)))
    # Veltkamp split: each half has <= 26 significant bits, so c * half is exact
    t = vals * 134217729.0
    hi = t - (t - vals)
    lo = vals - hi
    c = counts.astype(float)
    return math.fsum(np.concatenate([c * hi, c * lo]))


def log_likelihood(model, g, data):
    """Total log-likelihood ``sum_i log f_g(X_i)``.

    ``data`` is either the raw sample or a :class:`DiscreteMeasure`. For a
    measure the total is ``n * sum_j w_j log f_g(x_j)`` with ``n`` its recorded
    sample size; measures that carry integer counts are summed exactly, so a
    counting-compressed sample reproduces the per-sample sum to the last bit.
    """
    if isinstance(data, DiscreteMeasure):
        vals = log_mixture_density(model, g, data.atoms)
        if data.counts is not None:
            return _exact_count_sum(data.counts, vals)
        return data.sample_size * math.fsum(data.weights * vals)
    vals = log_mixture_density(model, g, np.asarray(data, dtype=float).ravel())
    return math.fsum(vals)


def likelihood_gap(model, g_ref, g_alt, data):
    """``l_n(f_{g_ref}) - l_n(f_{g_alt})`` on the same data."""
    return log_likelihood(model, g_ref, data) - log_likelihood(model, g_alt, data)


def posterior_mean(model, g, x):
    """Posterior mean of ``theta`` given ``x`` under prior ``g``."""
    x = model.check_support(x)
    theta, w = _atoms(model, g)
    expo = np.multiply.outer(x, theta) - np.asarray(model.kappa(theta)) + np.log(w)
    expo -= expo.max(axis=-1, keepdims=True)
    p = np.exp(expo)
    return (p @ theta) / p.sum(axis=-1)


def sse_posterior_mean(model, g, x, theta_true):
    """``sum_i (theta_i - E[theta | X_i])^2``."""
    resid = np.asarray(theta_true, dtype=float) - posterior_mean(model, g, x)
    return math.fsum(resid * resid)


@dataclass(frozen=True)
class DensityEstimate:
    """Plug-in marginal density ``f_g`` of a fitted mixing distribution."""

    model: object
    g: object

    def log_density(self, x):
        return log_mixture_density(self.model, self.g, x)

    def density(self, x):
        return mixture_density(self.model, self.g, x)

    def posterior_mean(self, x):
        return posterior_mean(self.model, self.g, x)


# ---------------------------------------------------------------------------
# Hellinger distance
# ---------------------------------------------------------------------------

def _theta_range(model, g):
    if hasattr(g, "support_range"):
        return g.support_range()
    theta, _ = _atoms(model, g)
    return float(theta.min()), float(theta.max())


def _initial_domain(model, ranges):
    lo_t = min(r[0] for r in ranges)
    hi_t = max(r[1] for r in ranges)
    mu_lo, mu_hi = float(model.kappa_prime(lo_t)), float(model.kappa_prime(hi_t))
    sd = math.sqrt(max(float(model.kappa_double_prime(lo_t)), float(model.kappa_double_prime(hi_t))))
    lo, hi = mu_lo - 12.0 * sd, mu_hi + 12.0 * sd
    if model.kind is ModelKind.SCALED_CHI_SQUARE:
        lo = 0.0
    return lo, hi


def _panels(lo, hi, width):
    k = max(1, int(math.ceil((hi - lo) / width)))
    return np.linspace(lo, hi, k + 1)


def _integrate(fn, edges, tol):
    total, err = [], 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = quad(fn, a, b, epsabs=tol / len(edges), epsrel=1e-12, limit=200)
        total.append(v)
        err += e
    return math.fsum(total), err


def hellinger_sq(model, g_a, g_b, tol=1e-10, tail_mass=1e-10, max_extend=20):
    """Squared Hellinger distance ``int (sqrt f_a - sqrt f_b)^2 dmu``.

    Counting support is summed exactly up to where both tails fall below
    ``tail_mass``. Lebesgue support uses adaptive Gauss-Kronrod panels on a
    domain grown until the mass outside it is below ``tail_mass``. Raises
    :class:`IntegrationError` when the error estimate stays above ``100 * tol``.
    """
    ranges = [_theta_range(model, g_a), _theta_range(model, g_b)]
    if model.is_discrete:
        lam = math.exp(max(r[1] for r in ranges))
        top = int(math.ceil(lam + 20.0 * math.sqrt(lam) + 40.0))
        for _ in range(max_extend):
            xs = np.arange(top + 1, dtype=float)
            la = log_mixture_density(model, g_a, xs)
            lb = log_mixture_density(model, g_b, xs)
            if min(math.fsum(np.exp(la)), math.fsum(np.exp(lb))) >= 1.0 - tail_mass:
                diff = np.exp(0.5 * la) - np.exp(0.5 * lb)
                return float(min(2.0, math.fsum(diff * diff)))
            top *= 2
        raise IntegrationError("Poisson tail did not close", math.fsum(diff * diff))

    def dens(g):
        return lambda x: float(np.exp(log_mixture_density(model, g, np.array([x]))[0]))

    fa, fb = dens(g_a), dens(g_b)
    lo, hi = _initial_domain(model, ranges)
    sd = math.sqrt(float(model.kappa_double_prime(0.0)))
    for _ in range(max_extend):
        edges = _panels(lo, hi, 2.0 * sd)
        mass_a, _ = _integrate(fa, edges, tol)
        mass_b, _ = _integrate(fb, edges, tol)
        if min(mass_a, mass_b) >= 1.0 - tail_mass:
            break
        width = hi - lo
        lo = lo if model.kind is ModelKind.SCALED_CHI_SQUARE else lo - 0.5 * width
        hi = hi + 0.5 * width
    else:
        raise IntegrationError("domain did not capture the mass", (mass_a, mass_b))

    def integrand(x):
        d = math.sqrt(fa(x)) - math.sqrt(fb(x))
        return d * d

    h2, err = _integrate(integrand, edges, tol)
    if err > 100 * tol:
        raise IntegrationError(f"error estimate {err:.2e} above tolerance", h2)
    return float(min(2.0, max(0.0, h2)))
