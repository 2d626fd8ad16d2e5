"""Closed-form prescriptions and approximation diagnostics.

Order selection for the compressed NPMLE, support bounds for the mixing
distribution, Bernstein-ellipse parameters and bounds, and Chebyshev
coefficient decay measurements.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.optimize import brentq, minimize_scalar

from .models import DomainError

__all__ = [
    "TheoryConstants",
    "ChebCoefficients",
    "ToleranceFloorWarning",
    "jn_theorem1",
    "jn_hetero",
    "hetero_delta",
    "solver_tolerance_for",
    "support_bound",
    "kappa_sup",
    "chebyshev_nodes",
    "cheb_projection",
    "cheb_evaluate",
    "rho_ellipse",
    "bernstein_tail_bound",
    "bernstein_polyellipse_bound",
    "log_lg_ellipse_sup",
    "NUMERIC_TOL_FLOOR",
]

NUMERIC_TOL_FLOOR = 1e-12


class ToleranceFloorWarning(RuntimeWarning):
    """Requested solver tolerance is below what float64 can certify."""


@dataclass(frozen=True)
class TheoryConstants:
    """Unspecified constants of the order formulas; all default to 1.

    ``b0``, ``b1``, ``beta0`` describe the light-tail condition
    ``P(|X|_n >= t) <= n exp(-b1 t^beta0)`` for ``t >= b0``.
    """

    C_universal: float = 1.0
    C_T0: float = 1.0
    b0: float = 1.0
    b1: float = 1.0
    beta0: float = 2.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("C_universal", "C_T0", "b0", "b1", "beta0", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return {k: getattr(self, k) for k in ("C_universal", "C_T0", "b0", "b1", "beta0", "gamma")}


def jn_theorem1(x_abs_max, M_n, kappa_sup_value, delta_n, n, C=1.0):
    """Quadrature order sufficient for a likelihood gap ``<= delta_n``.

    ``ceil(2 B log(C n B (B + sup|kappa|) / delta_n))`` with ``B = |X|_n M_n``,
    clamped below at 1.
    """
    B = x_abs_max * M_n
    if B < 1:
        raise ValueError("requires |X|_n * M_n >= 1")
    if not delta_n > 0:
        raise ValueError("delta_n must be positive")
    arg = C * n * B * (B + kappa_sup_value) / delta_n
    return max(1, math.ceil(2.0 * B * math.log(arg)))


def hetero_delta(n, gamma, x_abs_max):
    """Per-sample accuracy target ``n^{-(1+gamma)} |X|_n^{-4}`` inside the hetero order."""
    return n ** -(1.0 + gamma) * x_abs_max**-4


def jn_hetero(x_abs_max, M, T0, gamma, n, C_T0=1.0):
    """Order for the heteroscedastic Gaussian model.

    ``ceil(C |X| min(|X|, M) log(C n^{1+gamma} |X|^4))``, clamped below at 1.
    ``T0`` only enters through ``C_T0``; it is validated here.
    """
    if not x_abs_max > 0:
        raise ValueError("x_abs_max must be positive")
    if not T0 > 1:
        raise ValueError("T0 must exceed 1")
    arg = C_T0 / hetero_delta(n, gamma, x_abs_max)
    return max(1, math.ceil(C_T0 * x_abs_max * min(x_abs_max, M) * math.log(arg)))


def solver_tolerance_for(delta_n, n):
    """Per-unit-mass optimization tolerance ``delta_n / (2 n)``."""
    if not delta_n > 0 or n < 1:
        raise ValueError("need delta_n > 0 and n >= 1")
    tol = delta_n / (2.0 * n)
    if tol < NUMERIC_TOL_FLOOR:
        warnings.warn(
            f"solver tolerance {tol:.3g} is below the numeric floor {NUMERIC_TOL_FLOOR:g}",
            ToleranceFloorWarning,
            stacklevel=2,
        )
    return tol


def _invert_kappa_prime(model, mu):
    lo_m, hi_m = model.mean_range()
    if not lo_m < mu < hi_m:
        raise DomainError(f"{mu} outside the range of kappa'")
    # bracket by doubling, then bisect; closed forms exist but the bracket
    # keeps this valid for any strictly increasing kappa'
    a, b = -1.0, 1.0
    while model.kappa_prime(a) > mu:
        a *= 2.0
    while b < model.theta_upper and model.kappa_prime(min(b, _below(model.theta_upper))) < mu:
        b *= 2.0
    b = min(b, _below(model.theta_upper))
    return brentq(lambda t: float(model.kappa_prime(t)) - mu, a, b, xtol=1e-12, rtol=1e-15, maxiter=500)


def _below(upper):
    return upper - 1e-12 * max(1.0, abs(upper)) if math.isfinite(upper) else math.inf


def support_bound(model, x_abs_max):
    """Radius ``M_n`` containing the support of the (compressed) NPMLE.

    Finite ``M`` is returned as is. Otherwise the mode of ``l_theta(x)`` at
    ``x = +-|X|_n`` is found by inverting ``kappa'`` (closed form when the
    model has one, bisection otherwise); endpoints outside the range of
    ``kappa'`` are skipped.
    """
    if math.isfinite(model.support_radius):
        return float(model.support_radius)
    if x_abs_max < 0:
        raise ValueError("x_abs_max must be nonnegative")
    lo_m, hi_m = model.mean_range()
    ends = [mu for mu in (-x_abs_max, x_abs_max) if lo_m < mu < hi_m]
    if not ends:
        raise DomainError(f"|X|_n={x_abs_max} outside the range of kappa'")
    invert = getattr(model, "kappa_prime_inverse", None)
    if invert is None:
        return max(abs(_invert_kappa_prime(model, mu)) for mu in ends)
    return max(abs(float(invert(mu))) for mu in ends)


def kappa_sup(model, radius):
    """``sup_{|theta| <= radius} |kappa(theta)|``."""
    if radius == 0:
        return 0.0
    a, b = -radius, radius
    vals = [abs(float(model.kappa(a))), abs(float(model.kappa(b)))]
    res = minimize_scalar(lambda t: float(model.kappa(t)), bounds=(a, b), method="bounded")
    vals.append(abs(float(res.fun)))
    return max(vals)


# ---------------------------------------------------------------------------
# Chebyshev / Bernstein
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChebCoefficients:
    radius: float
    coefficients: np.ndarray
    rho_hat: float
    fit_range: tuple = field(default=(0, 0))

    @property
    def degree(self):
        return self.coefficients.shape[0] - 1


def chebyshev_nodes(B, J):
    """First-kind Chebyshev nodes on ``[-B, B]`` for a degree-``J`` interpolant."""
    N = J + 1
    return B * np.cos(np.pi * (np.arange(N) + 0.5) / N)


def _fit_decay(c, k_min=2):
    mags = np.abs(c)
    scale = mags.max() if mags.size else 0.0
    k = np.arange(c.shape[0])
    keep = (k >= k_min) & (mags > 1e3 * np.finfo(float).eps * scale)
    if keep.sum() < 2:
        return math.inf, (k_min, c.shape[0] - 1)
    slope = np.polyfit(k[keep], np.log(mags[keep]), 1)[0]
    return float(math.exp(-slope)), (int(k[keep].min()), int(k[keep].max()))


def cheb_projection(h, B, J):
    """Chebyshev coefficients ``c_0..c_J`` of ``h`` on ``[-B, B]``.

    ``h`` is a callable or its samples at :func:`chebyshev_nodes`. The
    coefficients are those of the interpolant (a DCT-II of the samples). The
    decay rate ``rho_hat`` comes from a log-linear fit of ``|c_k|`` over
    ``k >= 2``, ignoring coefficients at roundoff level.
    """
    if J < 0:
        raise ValueError("J must be >= 0")
    nodes = chebyshev_nodes(B, J)
    vals = np.asarray(h(nodes) if callable(h) else h, dtype=float)
    if vals.shape != nodes.shape:
        raise ValueError(f"expected {nodes.shape[0]} samples")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite sample")
    N = J + 1
    c = dct(vals, type=2) / N
    c[0] *= 0.5
    rho_hat, rng = _fit_decay(c)
    return ChebCoefficients(float(B), c, rho_hat, rng)


def cheb_evaluate(coef, x):
    """Evaluate ``sum_k c_k T_k(x / B)``."""
    return np.polynomial.chebyshev.chebval(np.asarray(x, float) / coef.radius, coef.coefficients)


def rho_ellipse(B, M_g):
    """Bernstein-ellipse parameter for ``log l_g`` on ``[-B, B]``."""
    if not (B > 0 and M_g > 0):
        raise ValueError("B and M_g must be positive")
    a = math.pi / (4.0 * B * M_g)
    return a + math.sqrt(1.0 + a * a)


def bernstein_tail_bound(C_h, rho, J):
    """Sup-norm error bound ``2 C_h / ((rho - 1) rho^J)`` of the degree-J projection."""
    if not rho > 1:
        raise ValueError("rho must exceed 1")
    return 2.0 * C_h / ((rho - 1.0) * rho**J)


def bernstein_polyellipse_bound(C_h, rhos, J, d=None):
    """Total-degree approximation bound on a product of Bernstein ellipses."""
    rhos = np.asarray(rhos, dtype=float)
    d = rhos.shape[0] if d is None else d
    if d != rhos.shape[0]:
        raise ValueError("d must equal the number of ellipse parameters")
    if np.any(rhos <= 1):
        raise ValueError("all rho must exceed 1")
    e = J // d + 1
    return float(2.0**d * C_h * np.prod(rhos / (rhos - 1.0)) * np.sum(rhos ** (-float(e))))


def log_lg_ellipse_sup(model, g, B, rho, n_points=4096):
    """Measured ``sup |log l_g(z)|`` over the boundary of the Bernstein ellipse.

    Uses the principal branch of the complex logarithm on
    ``z = (B/2)(rho e^{it} + e^{-it}/rho)``; ``log l_g`` is holomorphic inside,
    so the boundary maximum is the supremum over the closed ellipse.
    """
    t = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    w = rho * np.exp(1j * t)
    z = 0.5 * B * (w + 1.0 / w)
    theta, gw = g.support()
    expo = np.outer(z, theta) - np.asarray(model.kappa(theta))[None, :]
    shift = expo.real.max(axis=1)
    lg = (np.exp(expo - shift[:, None]) * gw).sum(axis=1)
    return float(np.abs(np.log(lg) + shift).max())
