"""Attribution of detected changes to tensor modes and mode-informed loadings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from collections.abc import Sequence

import numpy as np

from .errors import DegenerateSegmentError, InvalidInputError, RankDeficientError, SegmentTooShortError
from .factor import (
    PseudoFactorStats,
    TensorSeries,
    _as_series,
    estimate_loadings,
    estimate_ranks,
    mode_gram,
    preliminary_loadings,
    top_eigenvectors,
)
from .tensor import mode_product

DEFAULT_ZETA_MULTIPLIER = 3.5


def adjusted_endpoints(thetas: Sequence[int], finer: Sequence[tuple[int, int]], T: int, mode: str = "practical"):
    """Endpoints ``(theta_j^-, theta_j^+)`` for every estimate.

    ``theoretical`` picks the nearest finer seeded interval ends that do not
    straddle ``theta_j`` (``b <= theta`` for the left side, ``a > theta`` for
    the right); a side with no such interval falls back to ``theta_j``.
    ``practical`` uses ``theta_j`` on both sides.  When two neighbouring
    estimates are so close that their endpoints would cross, the facing sides
    also fall back to the estimates.

    Returns ``(endpoints, fallbacks)`` where ``fallbacks`` lists
    ``(j, side)`` pairs that used the fallback.
    """
    if mode not in ("practical", "theoretical"):
        raise InvalidInputError(f"unknown endpoint mode {mode!r}")
    thetas = [int(t) for t in thetas]
    if any(b <= a for a, b in zip(thetas, thetas[1:])):
        raise InvalidInputError("change point estimates must be strictly increasing")
    out, fallbacks = [], []
    for j, th in enumerate(thetas):
        if mode == "practical":
            out.append((th, th))
            continue
        lefts = [a for a, b in finer if b <= th]
        rights = [b for a, b in finer if a > th]
        if lefts:
            lo = max(lefts)
        else:
            lo = th
            fallbacks.append((j, "minus"))
        if rights:
            hi = min(rights)
        else:
            hi = th
            fallbacks.append((j, "plus"))
        out.append((lo, hi))
    # neighbouring changes closer than the finer scale would leave an empty
    # segment between them; those two sides revert to the estimates themselves
    for j in range(1, len(out)):
        if out[j - 1][1] > out[j][0]:
            if out[j - 1][1] != thetas[j - 1]:
                fallbacks.append((j - 1, "plus"))
            if out[j][0] != thetas[j]:
                fallbacks.append((j, "minus"))
            out[j - 1] = (out[j - 1][0], thetas[j - 1])
            out[j] = (thetas[j], out[j][1])
    fallbacks.sort()
    return out, fallbacks


def xi_from_covariances(prev: np.ndarray, nxt: np.ndarray) -> tuple[np.ndarray, float]:
    """Trace-normalized covariance difference and its spectral norm."""
    tp, tn = float(np.trace(prev)), float(np.trace(nxt))
    if not (tp > 0 and tn > 0):
        raise DegenerateSegmentError("segment covariance has zero trace")
    xi = nxt / tn - prev / tp
    xi = 0.5 * (xi + xi.T)
    norm = float(np.max(np.abs(np.linalg.eigvalsh(xi)))) if xi.size else 0.0
    return xi, norm


def xi_statistic(stats: PseudoFactorStats, seg_prev: tuple[int, int], seg_next: tuple[int, int], k: int):
    """``Xi`` between the mode-``k`` pseudo-factor covariances of two segments."""
    for a, b in (seg_prev, seg_next):
        if not 0 <= a < b <= stats.T:
            raise DegenerateSegmentError(f"empty or invalid segment ({a}, {b}]")
    return xi_from_covariances(stats.mode_covariance(k, *seg_prev), stats.mode_covariance(k, *seg_next))


def zeta_scale(T: int, p: int) -> float:
    return T ** -0.5 + 1.0 / p


def threshold_zeta(T: int, p: int, multiplier: float = DEFAULT_ZETA_MULTIPLIER) -> float:
    if T <= 0 or p <= 0:
        raise InvalidInputError("T and p must be positive")
    return multiplier * zeta_scale(T, p)


@dataclass
class ModeIdResult:
    xi: list[list[np.ndarray]]
    norms: np.ndarray
    modes: list[set[int]]
    zeta: float
    endpoints: list[tuple[int, int]]
    segments: list[tuple[tuple[int, int], tuple[int, int]]]
    scale: float
    endpoint_mode: str = "practical"
    fallbacks: list[tuple[int, str]] = field(default_factory=list)

    @property
    def scaled_norms(self) -> np.ndarray:
        return self.norms / self.scale


def identify_modes(
    stats: PseudoFactorStats,
    thetas: Sequence[int],
    finer: Sequence[tuple[int, int]] = (),
    *,
    p: int,
    zeta_multiplier: float = DEFAULT_ZETA_MULTIPLIER,
    endpoint_mode: str = "practical",
) -> ModeIdResult:
    """Modes at which each change is identifiable: ``{k : ||Xi_j^(k)|| > zeta}``."""
    T = stats.T
    K = len(stats.ranks)
    ends, fallbacks = adjusted_endpoints(thetas, finer, T, endpoint_mode)
    q = len(ends)
    zeta = threshold_zeta(T, p, zeta_multiplier)
    xis, norms, modes, segs = [], np.zeros((q, K)), [], []
    for j in range(q):
        left = 0 if j == 0 else ends[j - 1][1]
        right = T if j == q - 1 else ends[j + 1][0]
        prev, nxt = (left, ends[j][0]), (ends[j][1], right)
        segs.append((prev, nxt))
        row = []
        for k in range(K):
            xi, nrm = xi_statistic(stats, prev, nxt, k)
            row.append(xi)
            norms[j, k] = nrm
        xis.append(row)
        modes.append({k for k in range(K) if norms[j, k] > zeta})
    return ModeIdResult(xis, norms, modes, zeta, ends, segs, zeta_scale(T, p), endpoint_mode, fallbacks)


def loading_distance(A_hat: np.ndarray, A: np.ndarray) -> float:
    """Spectral norm of the difference of the projectors onto ``col(A_hat)`` and ``col(A)``."""
    A_hat = np.atleast_2d(np.asarray(A_hat, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A_hat.shape[0] != A.shape[0]:
        raise InvalidInputError(f"row dimensions differ: {A_hat.shape[0]} vs {A.shape[0]}")
    P = []
    for M in (A_hat, A):
        u, s, _ = np.linalg.svd(M, full_matrices=False)
        if s.size == 0 or s[-1] <= s[0] * 1e-12 * max(M.shape):
            raise RankDeficientError("loading matrix is not of full column rank")
        P.append(u @ u.T)
    diff = P[0] - P[1]
    return float(min(1.0, np.max(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.T))))))


@dataclass
class ModeLoadingRun:
    """Loading estimate for mode ``k`` valid on segments ``first..last`` (0-based)."""

    first: int
    last: int
    interval: tuple[int, int]
    loading: np.ndarray
    provenance: str


@dataclass
class ModeInformedLoadings:
    runs: list[list[ModeLoadingRun]]
    breakpoints: list[int]
    segment_wise: list[list[np.ndarray]]
    segment_ranks: list[tuple[int, ...]]

    def loading(self, k: int, segment: int) -> np.ndarray:
        for run in self.runs[k]:
            if run.first <= segment <= run.last:
                return run.loading
        raise IndexError(f"segment {segment} out of range")


def mode_runs(q: int, mode_sets: Sequence[set[int]], k: int) -> list[tuple[int, int]]:
    """Maximal runs of consecutive segments not separated by a mode-``k`` identifiable change."""
    runs, start = [], 0
    for j in range(q):
        if k in mode_sets[j]:
            runs.append((start, j))
            start = j + 1
    runs.append((start, q))
    return runs


def segment_loadings(s: TensorSeries, a: int, b: int, ranks: Sequence[int] | None = None):
    """Two-step estimator applied to ``(a, b]``; ranks estimated there when not given."""
    if b - a < 2:
        raise SegmentTooShortError(f"segment ({a}, {b}] has fewer than 2 observations")
    seg = s.segment(a, b)
    if ranks is None:
        ranks = estimate_ranks(seg)
    return estimate_loadings(seg, ranks)


def mode_informed_loadings(s, thetas: Sequence[int], mode_sets: Sequence[set[int]], ranks: Sequence[int]) -> ModeInformedLoadings:
    """Pool segments between mode-``k`` identifiable changes to estimate each mode's loading.

    Runs made of a single segment use the segment-wise two-step estimator.
    A pooled run sums, over its segments, the mode-``k`` Gram matrices of the
    data projected on the other modes; a mode that changes somewhere is
    projected with the segment's own estimate, any other mode with the global
    preliminary estimate.
    """
    s = _as_series(s)
    s.require_complete()
    thetas = [int(t) for t in thetas]
    q = len(thetas)
    if len(mode_sets) != q:
        raise InvalidInputError(f"{len(mode_sets)} mode sets for {q} change points")
    K = s.K
    bps = [0] + thetas + [s.T]
    seg_sets = []
    seg_ranks = []
    for j in range(q + 1):
        ls = segment_loadings(s, bps[j], bps[j + 1], ranks if q == 0 else None)
        seg_sets.append(ls.loadings)
        seg_ranks.append(ls.ranks)
    changing = [any(k in ms for ms in mode_sets) for k in range(K)]
    global_prelim = preliminary_loadings(s, ranks).loadings if any(not c for c in changing) else None

    runs_out = []
    for k in range(K):
        runs_k = []
        for first, last in mode_runs(q, mode_sets, k):
            a, b = bps[first], bps[last + 1]
            if q == 0:
                runs_k.append(ModeLoadingRun(0, 0, (a, b), seg_sets[0][k], "global"))
                continue
            if first == last:
                runs_k.append(ModeLoadingRun(first, last, (a, b), seg_sets[first][k], "segment"))
                continue
            pk = s.dims[k]
            acc = np.zeros((pk, pk))
            for j in range(first, last + 1):
                proj = [seg_sets[j][l] if changing[l] else global_prelim[l] for l in range(K)]
                z = s.data[bps[j]:bps[j + 1]]
                for l in sorted((l for l in range(K) if l != k), key=lambda l: -s.dims[l]):
                    z = mode_product(z, proj[l].T, l + 1)
                acc += mode_gram(z, k)
            acc /= (b - a) * pk
            _, vecs = top_eigenvectors(acc, int(ranks[k]))
            runs_k.append(ModeLoadingRun(first, last, (a, b), math.sqrt(pk) * vecs, "mode-informed"))
        runs_out.append(runs_k)
    return ModeInformedLoadings(runs_out, bps, seg_sets, seg_ranks)
