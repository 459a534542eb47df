"""Numba switch.

Set ``LZCRYSTAL_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable.
"""
import os

DISABLED = os.environ.get("LZCRYSTAL_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
