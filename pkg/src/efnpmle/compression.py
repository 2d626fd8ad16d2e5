"""Empirical measures and moment-matching compression.

Three constructions turn the empirical measure ``P_n`` into a small discrete
measure with the same low-order moments:

* counting compression for integer data (exact, same atoms and weights),
* order-``J`` Gaussian quadrature (Stieltjes recurrence + Golub-Welsch),
* 2-D Caratheodory-Tchakaloff subsampling on ``(x, tau)`` pairs.

All moment work happens after an affine map of the atoms onto ``[-1, 1]``.
"""

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, nnls

from . import kernels

__all__ = [
    "AffineMap",
    "Construction",
    "DiscreteMeasure",
    "QuadratureError",
    "QuadratureRule",
    "RecurrenceCoefficients",
    "compress",
    "counting_compress",
    "empirical_measure",
    "gauss_quadrature",
    "moment_residuals_2d",
    "raw_moments",
    "recurrence_coefficients",
    "tchakaloff_compress",
    "DEFAULT_ORDER",
    "MAX_ORDER",
    "MOMENT_TOL",
]

DEFAULT_ORDER = 25
MAX_ORDER = 40
MOMENT_TOL = 1e-8
BETA_FLOOR = 1e-13


class QuadratureError(RuntimeError):
    """Compression failed (eigensolver stall or unmatched moments)."""


class Construction(str, enum.Enum):
    GOLUB_WELSCH = "golub_welsch"
    COUNTING = "counting"
    TCHAKALOFF = "tchakaloff"
    IDENTITY = "identity"


@dataclass(frozen=True)
class AffineMap:
    """``z = (x - center) / scale``, column-wise for 2-D atoms."""

    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def to_unit_interval(cls, atoms):
        atoms = np.asarray(atoms, dtype=float)
        lo = atoms.min(axis=0)
        hi = atoms.max(axis=0)
        center = 0.5 * (lo + hi)
        scale = 0.5 * (hi - lo)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(np.asarray(center, float), np.asarray(scale, float))

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.center


class DiscreteMeasure:
    """Weighted atoms with pairwise-distinct locations.

    ``sample_size`` is the size of the sample the measure summarizes, so that
    totals like ``n * sum_j w_j log f(x_j)`` are comparable between the
    empirical measure and its compressions. ``counts`` (integer multiplicities)
    is kept when the measure is an exact empirical measure.
    """

    __slots__ = ("atoms", "weights", "sample_size", "counts")

    def __init__(self, atoms, weights, sample_size=None, counts=None):
        atoms = np.asarray(atoms, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if atoms.shape[0] == 0:
            raise ValueError("a discrete measure needs at least one atom")
        if atoms.shape[0] != weights.shape[0]:
            raise ValueError("atoms and weights differ in length")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if counts is None:
            atoms, weights = _merge_duplicates(atoms, weights)
        total = weights.sum()
        if abs(total - 1.0) > 1e-12:
            weights = weights / total
        self.atoms = atoms
        self.weights = weights
        self.sample_size = int(sample_size) if sample_size is not None else atoms.shape[0]
        self.counts = None if counts is None else np.asarray(counts, dtype=np.int64)
        for arr in (self.atoms, self.weights):
            arr.setflags(write=False)

    @property
    def dim(self):
        return 1 if self.atoms.ndim == 1 else self.atoms.shape[1]

    def __len__(self):
        return self.atoms.shape[0]

    def __repr__(self):
        return f"DiscreteMeasure(atoms={len(self)}, dim={self.dim}, n={self.sample_size})"


def _merge_duplicates(atoms, weights):
    axis = 0 if atoms.ndim > 1 else None
    uniq, inverse = np.unique(atoms, axis=axis, return_inverse=True)
    if uniq.shape[0] == atoms.shape[0]:
        order = np.argsort(inverse.ravel(), kind="stable")
        return atoms[order], weights[order]
    merged = np.zeros(uniq.shape[0])
    np.add.at(merged, inverse.ravel(), weights)
    return uniq, merged


def empirical_measure(data):
    """Empirical measure of ``data`` (1-D values or ``(n, 2)`` pairs)."""
    data = np.asarray(data, dtype=float)
    if data.shape[0] == 0:
        raise ValueError("empty data")
    if not np.all(np.isfinite(data)):
        raise ValueError("data contain non-finite values")
    axis = 0 if data.ndim > 1 else None
    atoms, counts = np.unique(data, axis=axis, return_counts=True)
    n = data.shape[0]
    return DiscreteMeasure(atoms, counts / n, sample_size=n, counts=counts)


# ---------------------------------------------------------------------------
# rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    measure: DiscreteMeasure
    order: int
    moment_residuals: np.ndarray
    construction: Construction
    affine: AffineMap
    truncated: bool = False

    @property
    def atoms(self):
        return self.measure.atoms

    @property
    def weights(self):
        return self.measure.weights

    def to_dict(self):
        return {
            "atoms": self.measure.atoms.tolist(),
            "weights": self.measure.weights.tolist(),
            "order": int(self.order),
            "residuals": np.asarray(self.moment_residuals).tolist(),
            "construction": self.construction.value,
            "sample_size": self.measure.sample_size,
        }


def raw_moments(measure, K, affine=None):
    """Moments ``m_0..m_K`` of a 1-D measure, compensated summation.

    With ``affine`` the moments are those of the mapped atoms
    ``affine.forward(x)``.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    x = measure.atoms if affine is None else affine.forward(measure.atoms)
    return kernels.power_sums(np.ascontiguousarray(x, dtype=float), measure.weights, int(K))


def counting_compress(data):
    """Exact compression of nonnegative integer data to counts ``N_k / n``."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 1 or data.shape[0] == 0:
        raise ValueError("counting compression needs nonempty 1-D data")
    if np.any(data < 0) or np.any(data != np.floor(data)):
        raise ValueError("counting compression needs nonnegative integer data")
    measure = empirical_measure(data)
    affine = AffineMap.to_unit_interval(measure.atoms)
    return QuadratureRule(
        measure=measure,
        order=len(measure),
        moment_residuals=np.zeros(2 * len(measure)),
        construction=Construction.COUNTING,
        affine=affine,
    )


@dataclass(frozen=True)
class RecurrenceCoefficients:
    """Three-term recurrence ``p_{k+1} = (x - alpha_k) p_k - beta_k p_{k-1}``.

    ``alpha``/``beta`` are in raw coordinates; ``beta[0]`` is the total mass.
    ``alpha_std``/``beta_std`` are the same coefficients for the standardized
    atoms, which is where they are computed.
    """

    order: int
    alpha_std: np.ndarray
    beta_std: np.ndarray
    affine: AffineMap
    truncated: bool

    @property
    def alpha(self):
        return self.affine.center + self.affine.scale * self.alpha_std

    @property
    def beta(self):
        b = self.beta_std * self.affine.scale**2
        b[0] = self.beta_std[0]
        return b


def recurrence_coefficients(measure, J, affine=None):
    """Stieltjes procedure on a 1-D discrete measure.

    Returns at most ``J`` coefficient pairs; when the measure has fewer than
    ``J`` numerically distinct atoms the result is cut short and flagged.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    if measure.dim != 1:
        raise ValueError("recurrence coefficients need a 1-D measure")
    affine = affine or AffineMap.to_unit_interval(measure.atoms)
    z = np.ascontiguousarray(affine.forward(measure.atoms))
    alpha, beta, terms = kernels.stieltjes(z, measure.weights, int(J), BETA_FLOOR)
    return RecurrenceCoefficients(
        order=int(terms),
        alpha_std=np.array(alpha),
        beta_std=np.array(beta),
        affine=affine,
        truncated=terms < J,
    )


def _moment_residuals_1d(source, rule_atoms, rule_weights, affine, K):
    src = kernels.power_sums(np.ascontiguousarray(affine.forward(source.atoms)), source.weights, K)
    got = kernels.power_sums(np.ascontiguousarray(affine.forward(rule_atoms)), rule_weights, K)
    return np.abs(got - src)


def gauss_quadrature(measure, J):
    """Order-``J`` Gaussian quadrature rule for a 1-D discrete measure.

    Nodes are the eigenvalues of the Jacobi matrix built from the recurrence
    coefficients; weights are the squared first eigenvector components. If
    ``J`` is at least the number of atoms the measure is returned unchanged.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    if measure.dim != 1:
        raise ValueError("gauss_quadrature needs a 1-D measure; see tchakaloff_compress")
    affine = AffineMap.to_unit_interval(measure.atoms)
    d = len(measure)
    if J >= d:
        return QuadratureRule(
            measure=measure,
            order=int(J),
            moment_residuals=np.zeros(2 * int(J)),
            construction=Construction.IDENTITY,
            affine=affine,
        )
    if J > MAX_ORDER:
        warnings.warn(
            f"order {J} exceeds the stable range; capping at {MAX_ORDER}", RuntimeWarning, stacklevel=2
        )
        J = MAX_ORDER
    rc = recurrence_coefficients(measure, J, affine)
    nodes_std, first, status = kernels.tridiag_ql(
        rc.alpha_std.copy(), np.sqrt(rc.beta_std[1:]).copy(), kernels.QL_MAX_ITER
    )
    if status >= 0:
        raise QuadratureError(
            f"tridiagonal QL did not converge for eigenvalue {status} within "
            f"{kernels.QL_MAX_ITER} iterations (order {rc.order}, "
            f"alpha={rc.alpha_std.tolist()}, beta={rc.beta_std.tolist()})"
        )
    order = np.argsort(nodes_std)
    nodes_std = nodes_std[order]
    weights = rc.beta_std[0] * first[order] ** 2
    weights = weights / weights.sum()
    lo, hi = measure.atoms[0], measure.atoms[-1]
    nodes = np.clip(affine.inverse(nodes_std), lo, hi)
    keep = weights > 0
    rule_measure = DiscreteMeasure(nodes[keep], weights[keep], sample_size=measure.sample_size)
    K = 2 * rc.order - 1
    residuals = _moment_residuals_1d(measure, rule_measure.atoms, rule_measure.weights, affine, K)
    return QuadratureRule(
        measure=rule_measure,
        order=rc.order,
        moment_residuals=residuals,
        construction=Construction.GOLUB_WELSCH,
        affine=affine,
        truncated=rc.truncated,
    )


# ---------------------------------------------------------------------------
# 2-D Caratheodory-Tchakaloff
# ---------------------------------------------------------------------------

def _monomial_moments_2d(uv, w, J):
    u, v = uv[:, 0], uv[:, 1]
    out = []
    for a, b in kernels.total_degree_exponents(J):
        out.append(math.fsum(w * u**a * v**b))
    return np.array(out)


def moment_residuals_2d(source, atoms, weights, affine, J):
    """``|m_ab(rule) - m_ab(source)|`` over monomials of total degree <= J."""
    src = _monomial_moments_2d(affine.forward(source.atoms), source.weights, J)
    got = _monomial_moments_2d(affine.forward(np.asarray(atoms)), np.asarray(weights), J)
    return np.abs(got - src)


def tchakaloff_compress(measure, J, max_iter=None):
    """Subsample a 2-D measure to match all moments of total degree ``<= J``.

    The compressed rule lives on a subset of the original atoms with at most
    ``(J + 1)(J + 2) / 2`` points. Weights come from nonnegative least squares
    on a tensor-Chebyshev basis, with a feasibility LP as fallback.
    """
    if measure.dim != 2:
        raise ValueError("tchakaloff_compress needs (x, tau) atoms")
    if J < 0:
        raise ValueError("J must be >= 0")
    affine = AffineMap.to_unit_interval(measure.atoms)
    nb = (J + 1) * (J + 2) // 2
    if len(measure) <= nb:
        return QuadratureRule(
            measure=measure,
            order=int(J),
            moment_residuals=np.zeros(nb),
            construction=Construction.IDENTITY,
            affine=affine,
        )
    uv = affine.forward(measure.atoms)
    V = kernels.cheb2d_vandermonde(np.ascontiguousarray(uv[:, 0]), np.ascontiguousarray(uv[:, 1]), int(J))
    target = V @ measure.weights
    best = None
    for solver in (_nnls_weights, _lp_weights):
        y = solver(V, target, max_iter)
        if y is None:
            continue
        idx = np.flatnonzero(y > 0)
        res = moment_residuals_2d(measure, measure.atoms[idx], y[idx], affine, J)
        if best is None or res.max() < best[2].max():
            best = (idx, y[idx], res)
        if res.max() <= MOMENT_TOL:
            break
    if best is None or best[2].max() > MOMENT_TOL:
        got = math.inf if best is None else float(best[2].max())
        raise QuadratureError(f"Tchakaloff residual {got:.3e} above {MOMENT_TOL:.0e}")
    idx, y, res = best
    rule_measure = DiscreteMeasure(measure.atoms[idx], y / y.sum(), sample_size=measure.sample_size)
    return QuadratureRule(
        measure=rule_measure,
        order=int(J),
        moment_residuals=res,
        construction=Construction.TCHAKALOFF,
        affine=affine,
    )


def _nnls_weights(V, target, max_iter):
    try:
        y, _ = nnls(V, target, maxiter=max_iter or 50 * V.shape[0])
    except RuntimeError:
        return None
    idx = np.flatnonzero(y > 0)
    # polish on the active columns; keep the NNLS answer if polishing breaks sign
    sol, *_ = np.linalg.lstsq(V[:, idx], target, rcond=None)
    if np.all(sol > 0):
        y = np.zeros_like(y)
        y[idx] = sol
    return y


def _lp_weights(V, target, max_iter):
    res = linprog(
        np.zeros(V.shape[1]), A_eq=V, b_eq=target, bounds=(0, None), method="highs-ds"
    )
    if res.status != 0:
        return None
    return res.x


def compress(data, J):
    """Pick the compression that fits the data.

    Integer 1-D data use exact counting compression, other 1-D data
    Gaussian quadrature of order ``J``, ``(n, 2)`` data Tchakaloff subsampling
    at total degree ``J``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        return tchakaloff_compress(empirical_measure(data), J)
    if np.all(data >= 0) and np.all(data == np.floor(data)):
        return counting_compress(data)
    return gauss_quadrature(empirical_measure(data), J)
