"""JIT switch for the hot loops.

Kernels are written once in a numba-compatible subset of numpy and decorated
with :func:`njit`.  Setting ``STALKER_NOJIT=1`` (or running without numba
installed) leaves them as plain Python functions, which is the reference
path used by the benchmark and by the equivalence tests.
"""
import functools
import os

import numpy as np

_DISABLED = os.environ.get("STALKER_NOJIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(fn=None, **kwargs):
    """``numba.njit`` with cache/nogil defaults, or a plain-Python wrapper when disabled."""

    def wrap(f):
        if not HAS_NUMBA:
            # uint64 hashing relies on wraparound; numpy scalars warn about it
            @functools.wraps(f)
            def plain(*args):
                with np.errstate(over="ignore"):
                    return f(*args)

            plain.py_func = f
            return plain
        opts = {"cache": True, "nogil": True}
        opts.update(kwargs)
        return numba.njit(**opts)(f)

    if fn is None:
        return wrap
    return wrap(fn)


def backend() -> str:
    return "numba" if HAS_NUMBA else "python"
