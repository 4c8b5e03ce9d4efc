"""Numba switch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when available. Setting ``LUTNA_DISABLE_NUMBA=1`` routes every
dispatching call to the pure-numpy implementation instead.
"""
from __future__ import annotations

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("LUTNA_DISABLE_NUMBA", "") not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` that degrades to the identity decorator."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


if HAS_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
