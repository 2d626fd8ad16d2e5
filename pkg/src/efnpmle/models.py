"""One-parameter exponential families used as mixture components.

A model is ``p_theta(x) = exp(theta * x - kappa(theta)) * p0(x)`` with a closed
form cumulant function ``kappa``. Three instances are provided: Gaussian
location (unit variance), scaled chi-square and unit-rate Poisson.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ModelKind",
    "ExpFamilyModel",
    "make_model",
    "kappa",
    "kappa_prime",
    "kappa_double_prime",
    "log_likelihood_ratio",
    "sample_mixture",
    "PointMass",
    "UniformPrior",
    "DomainError",
]


class DomainError(ValueError):
    """Raised when a parameter or observation lies outside the model domain."""


class ModelKind(str, enum.Enum):
    GAUSSIAN_LOCATION = "gl"
    SCALED_CHI_SQUARE = "sc"
    POISSON_UNIT = "poisson"


@dataclass(frozen=True)
class ExpFamilyModel:
    """Immutable description of an exponential family ``{p_theta}``.

    ``theta_upper`` is the right end of the canonical domain (open) and
    ``support_radius`` the known radius ``M`` of the mixing support, possibly
    infinite.
    """

    kind: ModelKind
    support_radius: float = math.inf
    nu: int = 0
    sigma2: float = 0.0
    theta_lower: float = -math.inf
    theta_upper: float = math.inf
    reference_kind: str = "lebesgue"
    tail_exponents: tuple | None = field(default=None)

    # -- domain ---------------------------------------------------------------
    @property
    def canonical_domain(self):
        return (self.theta_lower, self.theta_upper)

    @property
    def is_discrete(self):
        return self.reference_kind == "counting"

    def _check_theta(self, theta):
        t = np.asarray(theta, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(t <= self.theta_lower) or np.any(t >= self.theta_upper):
            raise DomainError(
                f"theta outside canonical domain ({self.theta_lower}, {self.theta_upper})"
            )
        return t

    def check_support(self, x):
        """Validate observations against the reference measure's support."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite observation")
        if self.kind is ModelKind.SCALED_CHI_SQUARE and np.any(x <= 0):
            raise DomainError("scaled chi-square observations must be positive")
        if self.kind is ModelKind.POISSON_UNIT and (np.any(x < 0) or np.any(x != np.round(x))):
            raise DomainError("Poisson observations must be nonnegative integers")
        return x

    # -- cumulant function and derivatives -------------------------------------
    def kappa(self, theta):
        t = self._check_theta(theta)
        if self.kind is ModelKind.GAUSSIAN_LOCATION:
            return 0.5 * t * t
        if self.kind is ModelKind.SCALED_CHI_SQUARE:
            return -0.5 * self.nu * np.log1p(-2.0 * self.sigma2 * t / self.nu)
        return np.expm1(t)

    def kappa_prime(self, theta):
        t = self._check_theta(theta)
        if self.kind is ModelKind.GAUSSIAN_LOCATION:
            return t * 1.0
        if self.kind is ModelKind.SCALED_CHI_SQUARE:
            return self.sigma2 / (1.0 - 2.0 * self.sigma2 * t / self.nu)
        return np.exp(t)

    def kappa_double_prime(self, theta):
        t = self._check_theta(theta)
        if self.kind is ModelKind.GAUSSIAN_LOCATION:
            return np.ones_like(t)
        if self.kind is ModelKind.SCALED_CHI_SQUARE:
            q = 1.0 - 2.0 * self.sigma2 * t / self.nu
            return 2.0 * self.sigma2**2 / (self.nu * q * q)
        return np.exp(t)

    def mean_range(self):
        """Open range of ``kappa'`` over the canonical domain."""
        if self.kind is ModelKind.GAUSSIAN_LOCATION:
            return (-math.inf, math.inf)
        return (0.0, math.inf)

    def kappa_prime_inverse(self, mu):
        """Canonical parameter whose mean is ``mu`` (closed form)."""
        mu = np.asarray(mu, dtype=float)
        lo, hi = self.mean_range()
        if np.any(mu <= lo) or np.any(mu >= hi):
            raise DomainError(f"mean {mu} outside the range of kappa'")
        if self.kind is ModelKind.GAUSSIAN_LOCATION:
            return mu * 1.0
        if self.kind is ModelKind.SCALED_CHI_SQUARE:
            return 0.5 * self.nu / self.sigma2 * (1.0 - self.sigma2 / mu)
        return np.log(mu)

    # -- densities -------------------------------------------------------------
    def log_likelihood_ratio(self, theta, x):
        """``log l_theta(x) = theta * x - kappa(theta)``."""
        theta = np.asarray(theta, dtype=float)
        return theta * np.asarray(x, dtype=float) - self.kappa(theta)

    def log_base_density(self, x):
        """``log p0(x)`` with respect to the reference measure."""
        x = self.check_support(x)
        if self.kind is ModelKind.GAUSSIAN_LOCATION:
            return -0.5 * x * x - 0.5 * math.log(2.0 * math.pi)
        if self.kind is ModelKind.SCALED_CHI_SQUARE:
            h = 0.5 * self.nu
            rate = h / self.sigma2
            return h * math.log(rate) + (h - 1.0) * np.log(x) - math.lgamma(h) - rate * x
        return -1.0 - gammaln(x + 1.0)

    def log_density(self, theta, x):
        """``log p_theta(x)``."""
        return self.log_base_density(x) + self.log_likelihood_ratio(theta, x)

    # -- sampling --------------------------------------------------------------
    def sample_given_theta(self, theta, rng):
        theta = self._check_theta(theta)
        if self.kind is ModelKind.GAUSSIAN_LOCATION:
            return theta + rng.standard_normal(theta.shape)
        if self.kind is ModelKind.SCALED_CHI_SQUARE:
            rate = 0.5 * self.nu / self.sigma2 - theta
            return rng.gamma(0.5 * self.nu, 1.0 / rate)
        return rng.poisson(np.exp(theta)).astype(float)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "support_radius": _encode_inf(self.support_radius),
            "nu": self.nu,
            "sigma2": self.sigma2,
        }

    @classmethod
    def from_dict(cls, d):
        params = {}
        if d.get("nu"):
            params["nu"] = d["nu"]
        if d.get("sigma2"):
            params["sigma2"] = d["sigma2"]
        return make_model(d["kind"], params, _decode_inf(d.get("support_radius", "inf")))


def _encode_inf(v):
    return "inf" if math.isinf(v) else float(v)


def _decode_inf(v):
    return math.inf if v in ("inf", None) else float(v)


def make_model(kind, params=None, M=math.inf):
    """Build a model of the given kind.

    ``params`` holds ``nu`` and ``sigma2`` for the scaled chi-square family
    and is ignored otherwise. ``M`` is the known radius of the mixing support.
    """
    kind = ModelKind(kind)
    params = dict(params or {})
    M = float(M)
    if not M > 0:
        raise DomainError("support radius M must be positive")
    if kind is ModelKind.GAUSSIAN_LOCATION:
        return ExpFamilyModel(kind, support_radius=M, tail_exponents=(1.0, 1.0))
    if kind is ModelKind.POISSON_UNIT:
        return ExpFamilyModel(kind, support_radius=M, reference_kind="counting")
    nu = params.get("nu", 2)
    sigma2 = float(params.get("sigma2", 1.0))
    if int(nu) != nu or nu < 2:
        raise DomainError("nu must be an integer >= 2")
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    upper = 0.5 * nu / sigma2
    if not M < upper:
        raise DomainError(f"support radius M={M} must be below nu/(2 sigma2)={upper}")
    return ExpFamilyModel(
        kind, support_radius=M, nu=int(nu), sigma2=sigma2, theta_upper=upper
    )


def kappa(model, theta):
    return model.kappa(theta)


def kappa_prime(model, theta):
    return model.kappa_prime(theta)


def kappa_double_prime(model, theta):
    return model.kappa_double_prime(theta)


def log_likelihood_ratio(model, theta, x):
    return model.log_likelihood_ratio(theta, x)


# ---------------------------------------------------------------------------
# analytic priors for simulation and oracle densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointMass:
    theta: float

    def sample(self, n, rng):
        return np.full(n, float(self.theta))

    def support_range(self):
        return (float(self.theta), float(self.theta))


@dataclass(frozen=True)
class UniformPrior:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ValueError("UniformPrior needs lower < upper")

    def sample(self, n, rng):
        return rng.uniform(self.lower, self.upper, n)

    def support_range(self):
        return (float(self.lower), float(self.upper))


def sample_mixture(model, prior, n, seed=None):
    """Draw ``theta_i ~ prior`` then ``X_i ~ p_{theta_i}``.

    ``prior`` is a :class:`PointMass`, :class:`UniformPrior` or any object
    with ``grid``/``weights`` (a discrete mixing distribution). Returns
    ``(x, theta)``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if hasattr(prior, "sample"):
        theta = prior.sample(n, rng)
    elif hasattr(prior, "grid") and hasattr(prior, "weights"):
        theta = rng.choice(np.asarray(prior.grid), size=n, p=np.asarray(prior.weights))
    else:
        raise TypeError(f"unsupported prior {prior!r}")
    lo, hi = float(np.min(theta)), float(np.max(theta))
    if max(abs(lo), abs(hi)) > model.support_radius:
        raise DomainError("prior support exceeds the model's support radius")
    x = model.sample_given_theta(theta, rng)
    return x, theta
