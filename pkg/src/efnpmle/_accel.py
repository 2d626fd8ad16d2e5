"""Backend selection for the numeric kernels.

Every hot kernel in :mod:`efnpmle.kernels` exists twice: a numba ``@njit``
loop version and a vectorized numpy version. The numba path is used when
numba imports cleanly and ``EFNPMLE_DISABLE_NUMBA`` is unset (or ``0``).
"""

import os

_FLAG = os.environ.get("EFNPMLE_DISABLE_NUMBA", "0").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG in ("", "0", "false", "no")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Compilation is lazy, so decorating does not cost anything when the
    numpy backend is selected.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
