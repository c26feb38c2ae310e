"""Optional numba acceleration.

Set ``TFMSEG_DISABLE_NUMBA=1`` (or have numba missing) to run the pure-numpy
kernels instead.  The flag is read once, at import time.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("TFMSEG_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False

JIT_OPTIONS = {"nogil": True, "cache": True}


def njit(func):
    if not HAVE_NUMBA:
        return func
    return _njit(**JIT_OPTIONS)(func)


def worker_count() -> int:
    """Workers allowed by ``TFMSEG_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("TFMSEG_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n
