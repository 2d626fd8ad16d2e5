"""Time the numba kernels against their pure-numpy twins.

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 5]

Numba variants are compiled once before timing. The backend used by the rest
of the package is chosen by EFNPMLE_DISABLE_NUMBA; this script calls both
variants directly, so the flag does not affect it.
"""

import argparse
import timeit

import numpy as np

from efnpmle import kernels
from efnpmle._accel import USE_NUMBA


def cases(n, grid_size, J):
    rng = np.random.default_rng(0)
    x = rng.normal(size=n)
    w = np.full(n, 1.0 / n)
    z = np.clip(x / np.max(np.abs(x)), -1, 1)
    theta = np.linspace(-3, 3, grid_size)
    tau = rng.choice([0.5, 1.0, 2.0], n)
    L, _ = kernels.ef_loglik_matrix_numpy(x, theta, 0.5 * theta**2)
    g = np.full(grid_size, 1.0 / grid_size)
    u, v = z[:2000], np.clip(tau[:2000] - 1.25, -1, 1)
    return {
        "power_sums": ((z, w, 2 * J), {}),
        "stieltjes": ((z, w, J, 1e-300), {}),
        "ef_loglik_matrix": ((x, theta, 0.5 * theta**2), {}),
        "hetero_loglik_matrix": ((x, tau, theta), {}),
        "mixture_matvecs": ((L, g, w), {}),
        "cheb2d_vandermonde": ((u, v, 8), {}),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--grid-size", type=int, default=300)
    ap.add_argument("--J", type=int, default=25)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not USE_NUMBA:
        print("note: numba disabled in this process; the numba column runs interpreted")
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, (a, kw) in cases(args.n, args.grid_size, args.J).items():
        fast, slow = getattr(kernels, f"{name}_numba"), getattr(kernels, f"{name}_numpy")
        fast(*a, **kw)  # compile
        t_np = min(timeit.repeat(lambda: slow(*a, **kw), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fast(*a, **kw), number=1, repeat=args.repeat))
        print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
