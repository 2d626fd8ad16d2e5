"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names (``power_sums``, ``stieltjes``, ...) are bound to the backend
chosen in :mod:`efnpmle._accel`. Both variants stay importable as
``<name>_numba`` / ``<name>_numpy`` so tests and benchmarks can compare them.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "power_sums",
    "stieltjes",
    "tridiag_ql",
    "ef_loglik_matrix",
    "hetero_loglik_matrix",
    "mixture_matvecs",
    "cheb2d_vandermonde",
    "QL_MAX_ITER",
    "set_deterministic",
]

QL_MAX_ITER = 50


# ---------------------------------------------------------------------------
# weighted power sums with compensated summation
# ---------------------------------------------------------------------------

@njit
def power_sums_numba(z, w, K):
    s = np.zeros(K + 1)
    c = np.zeros(K + 1)
    for i in range(z.shape[0]):
        p = w[i]
        zi = z[i]
        for k in range(K + 1):
            # Neumaier update
            t = s[k] + p
            if abs(s[k]) >= abs(p):
                c[k] += (s[k] - t) + p
            else:
                c[k] += (p - t) + s[k]
            s[k] = t
            p *= zi
    return s + c


def power_sums_numpy(z, w, K):
    z = np.asarray(z, dtype=float)
    p = np.asarray(w, dtype=float).copy()
    out = np.empty(K + 1)
    for k in range(K + 1):
        out[k] = math.fsum(p)
        p *= z
    return out


# ---------------------------------------------------------------------------
# Stieltjes procedure (orthonormal form, full reorthogonalization)
# ---------------------------------------------------------------------------

@njit
def stieltjes_numba(z, w, J, floor):
    n = z.shape[0]
    alpha = np.zeros(J)
    beta = np.zeros(J)
    Q = np.zeros((J, n))
    b0 = 0.0
    for i in range(n):
        b0 += w[i]
    beta[0] = b0
    inv = 1.0 / math.sqrt(b0)
    for i in range(n):
        Q[0, i] = inv
    r = np.zeros(n)
    terms = J
    for k in range(J):
        a = 0.0
        for i in range(n):
            a += w[i] * z[i] * Q[k, i] * Q[k, i]
        alpha[k] = a
        if k == J - 1:
            break
        bk = math.sqrt(beta[k]) if k > 0 else 0.0
        for i in range(n):
            r[i] = (z[i] - a) * Q[k, i]
            if k > 0:
                r[i] -= bk * Q[k - 1, i]
        for l in range(k + 1):
            c = 0.0
            for i in range(n):
                c += w[i] * r[i] * Q[l, i]
            for i in range(n):
                r[i] -= c * Q[l, i]
        nb = 0.0
        for i in range(n):
            nb += w[i] * r[i] * r[i]
        if nb <= floor:
            terms = k + 1
            break
        beta[k + 1] = nb
        inv = 1.0 / math.sqrt(nb)
        for i in range(n):
            Q[k + 1, i] = r[i] * inv
    return alpha[:terms], beta[:terms], terms


def stieltjes_numpy(z, w, J, floor):
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    alpha = np.zeros(J)
    beta = np.zeros(J)
    Q = np.zeros((J, z.shape[0]))
    beta[0] = w.sum()
    Q[0] = 1.0 / math.sqrt(beta[0])
    terms = J
    for k in range(J):
        alpha[k] = np.dot(w * z, Q[k] * Q[k])
        if k == J - 1:
            break
        r = (z - alpha[k]) * Q[k]
        if k > 0:
            r -= math.sqrt(beta[k]) * Q[k - 1]
        for l in range(k + 1):
            r -= np.dot(w * r, Q[l]) * Q[l]
        nb = np.dot(w * r, r)
        if nb <= floor:
            terms = k + 1
            break
        beta[k + 1] = nb
        Q[k + 1] = r / math.sqrt(nb)
    return alpha[:terms], beta[:terms], terms


# ---------------------------------------------------------------------------
# implicit QL for a symmetric tridiagonal matrix, first eigenvector row only
# ---------------------------------------------------------------------------

def _tridiag_ql_py(diag, offdiag, max_iter):
    """Eigenvalues and first eigenvector components of a Jacobi matrix.

    Returns ``(eigenvalues, first_row, status)`` where ``status`` is ``-1``
    on success or the index of the eigenvalue that hit ``max_iter``.
    """
    n = diag.shape[0]
    d = diag.copy()
    e = np.zeros(n)
    for i in range(n - 1):
        e[i] = offdiag[i]
    z = np.zeros(n)
    z[0] = 1.0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return d, z, l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (abs(r) if g >= 0.0 else -abs(r)))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z, -1


tridiag_ql_numba = njit(_tridiag_ql_py)
# scalar recurrence; the fallback is the same loop run by the interpreter
tridiag_ql_numpy = _tridiag_ql_py


# ---------------------------------------------------------------------------
# row-shifted likelihood matrices
# ---------------------------------------------------------------------------

@njit
def ef_loglik_matrix_numba(x, theta, kappa_theta):
    m = x.shape[0]
    K = theta.shape[0]
    L = np.empty((m, K))
    shift = np.empty(m)
    for j in range(m):
        s = -np.inf
        for k in range(K):
            v = theta[k] * x[j] - kappa_theta[k]
            L[j, k] = v
            if v > s:
                s = v
        shift[j] = s
        for k in range(K):
            L[j, k] = math.exp(L[j, k] - s)
    return L, shift


def ef_loglik_matrix_numpy(x, theta, kappa_theta):
    A = np.multiply.outer(np.asarray(x, float), np.asarray(theta, float))
    A -= kappa_theta
    shift = A.max(axis=1)
    A -= shift[:, None]
    np.exp(A, out=A)
    return A, shift


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@njit
def hetero_loglik_matrix_numba(x, tau, theta):
    m = x.shape[0]
    K = theta.shape[0]
    L = np.empty((m, K))
    shift = np.empty(m)
    for j in range(m):
        base = 0.5 * math.log(tau[j]) - _HALF_LOG_2PI
        s = -np.inf
        for k in range(K):
            dx = x[j] - theta[k]
            v = base - 0.5 * tau[j] * dx * dx
            L[j, k] = v
            if v > s:
                s = v
        shift[j] = s
        for k in range(K):
            L[j, k] = math.exp(L[j, k] - s)
    return L, shift


def hetero_loglik_matrix_numpy(x, tau, theta):
    x = np.asarray(x, float)
    tau = np.asarray(tau, float)
    A = np.subtract.outer(x, np.asarray(theta, float))
    A *= A
    A *= -0.5 * tau[:, None]
    A += (0.5 * np.log(tau) - _HALF_LOG_2PI)[:, None]
    shift = A.max(axis=1)
    A -= shift[:, None]
    np.exp(A, out=A)
    return A, shift


# ---------------------------------------------------------------------------
# fused mixture mat-vecs: f = L g and d = L^T (w / f)
# ---------------------------------------------------------------------------

@njit
def mixture_matvecs_numba(L, g, w):
    m, K = L.shape
    f = np.empty(m)
    d = np.zeros(K)
    for j in range(m):
        acc = 0.0
        for k in range(K):
            acc += L[j, k] * g[k]
        f[j] = acc
        if acc > 0.0:
            c = w[j] / acc
            for k in range(K):
                d[k] += c * L[j, k]
    return f, d


def mixture_matvecs_numpy(L, g, w):
    f = L @ g
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(f > 0.0, w / f, 0.0)
    return f, ratio @ L


def mixture_matvecs_serial(L, g, w):
    # einsum's own loops, not a threaded BLAS: summation order is fixed
    f = np.einsum("jk,k->j", L, g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(f > 0.0, w / f, 0.0)
    return f, np.einsum("j,jk->k", ratio, L)


# ---------------------------------------------------------------------------
# 2-D tensor-Chebyshev Vandermonde in total degree
# ---------------------------------------------------------------------------

@njit
def cheb2d_vandermonde_numba(u, v, J):
    n = u.shape[0]
    nb = (J + 1) * (J + 2) // 2
    Tu = np.empty((J + 1, n))
    Tv = np.empty((J + 1, n))
    for i in range(n):
        Tu[0, i] = 1.0
        Tv[0, i] = 1.0
        if J >= 1:
            Tu[1, i] = u[i]
            Tv[1, i] = v[i]
        for k in range(2, J + 1):
            Tu[k, i] = 2.0 * u[i] * Tu[k - 1, i] - Tu[k - 2, i]
            Tv[k, i] = 2.0 * v[i] * Tv[k - 1, i] - Tv[k - 2, i]
    V = np.empty((nb, n))
    row = 0
    for deg in range(J + 1):
        for a in range(deg, -1, -1):
            b = deg - a
            for i in range(n):
                V[row, i] = Tu[a, i] * Tv[b, i]
            row += 1
    return V


def _cheb_rows(t, J):
    T = np.empty((J + 1, t.shape[0]))
    T[0] = 1.0
    if J >= 1:
        T[1] = t
    for k in range(2, J + 1):
        T[k] = 2.0 * t * T[k - 1] - T[k - 2]
    return T


def cheb2d_vandermonde_numpy(u, v, J):
    Tu = _cheb_rows(np.asarray(u, float), J)
    Tv = _cheb_rows(np.asarray(v, float), J)
    rows = [Tu[a] * Tv[deg - a] for deg in range(J + 1) for a in range(deg, -1, -1)]
    return np.array(rows)


def total_degree_exponents(J):
    """Exponent pairs ``(a, b)`` in the row order of :func:`cheb2d_vandermonde`."""
    return [(a, deg - a) for deg in range(J + 1) for a in range(deg, -1, -1)]


if USE_NUMBA:
    power_sums = power_sums_numba
    stieltjes = stieltjes_numba
    tridiag_ql = tridiag_ql_numba
    ef_loglik_matrix = ef_loglik_matrix_numba
    hetero_loglik_matrix = hetero_loglik_matrix_numba
    mixture_matvecs = mixture_matvecs_numba
    cheb2d_vandermonde = cheb2d_vandermonde_numba
else:
    power_sums = power_sums_numpy
    stieltjes = stieltjes_numpy
    tridiag_ql = tridiag_ql_numpy
    ef_loglik_matrix = ef_loglik_matrix_numpy
    hetero_loglik_matrix = hetero_loglik_matrix_numpy
    mixture_matvecs = mixture_matvecs_numpy
    cheb2d_vandermonde = cheb2d_vandermonde_numpy


def set_deterministic(flag=True):
    """Route the solver mat-vecs through a fixed-order reduction."""
    global mixture_matvecs
    if flag:
        mixture_matvecs = mixture_matvecs_numba if USE_NUMBA else mixture_matvecs_serial
    else:
        mixture_matvecs = mixture_matvecs_numba if USE_NUMBA else mixture_matvecs_numpy
