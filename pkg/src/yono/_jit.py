"""Numba switch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when available. Setting ``YONO_DISABLE_JIT=1`` (or not having
numba installed) routes every caller to the vectorised numpy fallbacks in
:mod:`yono.kernels` instead.
"""
import os
import warnings

_DISABLED = os.environ.get("YONO_DISABLE_JIT", "0").strip().lower() in ("1", "true", "yes")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False
    if not _DISABLED:
        warnings.warn("numba could not be imported; using numpy kernels")

USE_JIT = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator.

    Decoration is independent of ``USE_JIT`` so the compiled kernels stay
    reachable (tests and benchmarks compare both paths in one process).
    """
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
