"""Numba switch.

Kernels are written once in numba-compatible Python. Setting
``APISHIFT_DISABLE_NUMBA=1`` (or running without numba installed) leaves them
as plain Python over numpy arrays.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_FLAG = os.environ.get("APISHIFT_DISABLE_NUMBA", "").strip().lower()
ENABLE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")
CACHE_NUMBA = True


def jit(func):
    """Compile ``func`` in nopython mode when numba is enabled."""
    if ENABLE_NUMBA:
        return numba.njit(cache=CACHE_NUMBA)(func)
    return func


def backend():
    return "numba" if ENABLE_NUMBA else "numpy"
