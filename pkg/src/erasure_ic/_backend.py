"""Kernel backend selection.

Hot loops are compiled with numba when it is importable. Setting
``ERASURE_IC_PURE_NUMPY=1`` before import forces the vectorised numpy
fallbacks instead; both paths must give identical results.
"""

from __future__ import annotations

import os

_FLAG = "ERASURE_IC_PURE_NUMPY"

USE_NUMBA = os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
