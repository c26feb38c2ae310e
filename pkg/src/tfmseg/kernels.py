"""Hot loops of the detector: interval scans and the Bartlett diagonal.

Each kernel has a numba and a numpy implementation with identical
semantics.  The public names dispatch to numba unless it is disabled (see
:mod:`tfmseg._accel`); both variants stay importable for testing and
benchmarking.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

__all__ = [
    "BACKEND",
    "scan_interval",
    "scan_intervals",
    "bartlett_diag",
    "detector_profile",
]


def detector_profile(S: np.ndarray, winv: np.ndarray, a: int, b: int) -> np.ndarray:
    """Detector values for every ``a < tau < b`` (index ``tau - a - 1``)."""
    taus = np.arange(a + 1, b)
    if taus.size == 0:
        return np.empty(0)
    left = (S[taus] - S[a]) / (taus - a)[:, None]
    right = (S[b] - S[taus]) / (b - taus)[:, None]
    scale = np.sqrt((taus - a) * (b - taus) / (b - a))
    m = scale[:, None] * (right - left)
    return np.sqrt(np.einsum("ij,ij,j->i", m, m, winv))


def _scan_interval_numpy(S, winv, a, b, lo, hi):
    if hi < lo:
        return b, 0.0
    prof = detector_profile(S, winv, a, b)[lo - a - 1:hi - a]
    i = int(np.argmax(prof))
    return lo + i, float(prof[i])


def _scan_intervals_numpy(S, winv, starts, ends, trim):
    n = starts.shape[0]
    taus = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    for i in range(n):
        a, b = int(starts[i]), int(ends[i])
        if b - a > 2 * trim:
            taus[i], vals[i] = _scan_interval_numpy(S, winv, a, b, a + trim + 1, b - trim - 1)
        else:
            taus[i], vals[i] = b, 0.0
    return taus, vals


def _bartlett_diag_numpy(g, bandwidth):
    T = g.shape[0]
    out = np.einsum("ij,ij->j", g, g) / T
    for lag in range(1, bandwidth + 1):
        if lag >= T:
            break
        weight = 1.0 - lag / (bandwidth + 1.0)
        out = out + weight * 2.0 * np.einsum("ij,ij->j", g[lag:], g[:-lag]) / T
    return out


@njit
def _scan_interval_numba(S, winv, a, b, lo, hi):
    d = S.shape[1]
    best_tau = b
    best = -1.0
    if hi < lo:
        return b, 0.0
    for tau in range(lo, hi + 1):
        nl = tau - a
        nr = b - tau
        scale = np.sqrt(nl * nr / (b - a))
        acc = 0.0
        for j in range(d):
            m = scale * ((S[b, j] - S[tau, j]) / nr - (S[tau, j] - S[a, j]) / nl)
            acc += m * m * winv[j]
        val = np.sqrt(acc)
        if val > best:
            best = val
            best_tau = tau
    return best_tau, best


@njit
def _scan_intervals_numba(S, winv, starts, ends, trim):
    n = starts.shape[0]
    taus = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    for i in range(n):
        a = starts[i]
        b = ends[i]
        if b - a > 2 * trim:
            t, v = _scan_interval_numba(S, winv, a, b, a + trim + 1, b - trim - 1)
            taus[i] = t
            vals[i] = v
        else:
            taus[i] = b
            vals[i] = 0.0
    return taus, vals


@njit
def _bartlett_diag_numba(g, bandwidth):
    T, d = g.shape
    out = np.zeros(d)
    for j in range(d):
        acc = 0.0
        for t in range(T):
            acc += g[t, j] * g[t, j]
        out[j] = acc / T
    for lag in range(1, bandwidth + 1):
        if lag >= T:
            break
        weight = 1.0 - lag / (bandwidth + 1.0)
        for j in range(d):
            acc = 0.0
            for t in range(lag, T):
                acc += g[t, j] * g[t - lag, j]
            out[j] += weight * 2.0 * acc / T
    return out


NUMPY_KERNELS = {
    "scan_interval": _scan_interval_numpy,
    "scan_intervals": _scan_intervals_numpy,
    "bartlett_diag": _bartlett_diag_numpy,
}

if HAVE_NUMBA:
    NUMBA_KERNELS = {
        "scan_interval": _scan_interval_numba,
        "scan_intervals": _scan_intervals_numba,
        "bartlett_diag": _bartlett_diag_numba,
    }
    BACKEND = "numba"
else:
    NUMBA_KERNELS = None
    BACKEND = "numpy"

_ACTIVE = NUMBA_KERNELS if HAVE_NUMBA else NUMPY_KERNELS


def scan_interval(S, winv, a, b, lo, hi):
    """Maximize the detector over integer ``lo <= tau <= hi`` inside ``(a, b]``.

    Returns ``(tau, value)``; ties go to the smallest ``tau``.  An empty range
    returns ``(b, 0.0)``.
    """
    S = np.ascontiguousarray(S, dtype=np.float64)
    winv = np.ascontiguousarray(winv, dtype=np.float64)
    tau, val = _ACTIVE["scan_interval"](S, winv, int(a), int(b), int(lo), int(hi))
    return int(tau), float(val)


def scan_intervals(S, winv, starts, ends, trim):
    """Vectorized :func:`scan_interval` over many intervals with common trimming.

    Intervals with ``b - a <= 2 * trim`` get ``(b, 0.0)``.
    """
    S = np.ascontiguousarray(S, dtype=np.float64)
    winv = np.ascontiguousarray(winv, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    ends = np.ascontiguousarray(ends, dtype=np.int64)
    return _ACTIVE["scan_intervals"](S, winv, starts, ends, int(trim))


def bartlett_diag(g, bandwidth):
    """Diagonal of the Bartlett-kernel long-run covariance of rows of ``g``."""
    g = np.ascontiguousarray(g, dtype=np.float64)
    return _ACTIVE["bartlett_diag"](g, int(bandwidth))
