"""Loading, factor number and pseudo-factor estimation for Tucker factor series."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from collections.abc import Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError, SegmentTooShortError, UnsupportedMissingError
from .tensor import mode_product, vech_dim

# rows of the series processed per GEMM when accumulating Gram matrices
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class TensorSeries:
    """``T`` observations of a ``dims``-shaped tensor.

    ``data`` has shape ``(T, p_1, ..., p_K)``.  ``mask`` (same shape, True
    where observed) is ``None`` for fully observed data.
    """

    data: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim < 2:
            raise InvalidInputError("a series needs a time axis and at least one mode")
        if min(data.shape) < 1:
            raise InvalidInputError(f"empty dimension in series of shape {data.shape}")
        object.__setattr__(self, "data", data)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != data.shape:
                raise DimensionMismatchError(f"mask shape {mask.shape} != data shape {data.shape}")
            object.__setattr__(self, "mask", mask)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape[1:]

    @property
    def K(self) -> int:
        return self.data.ndim - 1

    @property
    def p(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def has_missing(self) -> bool:
        return self.mask is not None and not bool(self.mask.all())

    def require_complete(self) -> None:
        if self.has_missing:
            raise UnsupportedMissingError(
                "series has missing entries; imputation-based factor estimation is not supported"
            )

    def segment(self, a: int, b: int) -> "TensorSeries":
        """Observations at times ``a+1, ..., b`` (1-based), i.e. rows ``a:b``."""
        if not 0 <= a < b <= self.T:
            raise InvalidInputError(f"invalid interval ({a}, {b}] for T={self.T}")
        mask = None if self.mask is None else self.mask[a:b]
        return TensorSeries(self.data[a:b], mask)


@dataclass
class LoadingSet:
    """Per-mode loading matrices scaled so that ``L.T @ L == p_k * I``."""

    loadings: list[np.ndarray]
    provenance: str = "global"
    eigenvalues: list[np.ndarray] = field(default_factory=list)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(int(L.shape[1]) for L in self.loadings)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(L.shape[0]) for L in self.loadings)


def _as_series(s) -> TensorSeries:
    return s if isinstance(s, TensorSeries) else TensorSeries(np.asarray(s))


def mode_gram(data: np.ndarray, axis: int) -> np.ndarray:
    """``sum_n unfold(x_n, axis) unfold(x_n, axis).T`` over the leading axis of ``data``.

    ``axis`` counts the modes of a single observation (0-based).  Works in
    chunks so the temporary copy stays small.
    """
    data = np.ascontiguousarray(data)
    pk = data.shape[axis + 1]
    pre = int(np.prod(data.shape[: axis + 1], dtype=np.int64))
    post = int(np.prod(data.shape[axis + 2:], dtype=np.int64))
    x = data.reshape(pre, pk, post)
    out = np.zeros((pk, pk))
    if post == 1:
        z = x.reshape(pre, pk)
        step = max(1, _CHUNK_ELEMENTS // pk)
        for s in range(0, pre, step):
            c = z[s:s + step]
            out += c.T @ c
        return out
    step = max(1, _CHUNK_ELEMENTS // (pk * post))
    for s in range(0, pre, step):
        c = x[s:s + step].transpose(1, 0, 2).reshape(pk, -1)
        out += c @ c.T
    return out


def mode_covariance(s, k: int, a: int = 0, b: int | None = None) -> np.ndarray:
    """Scaled mode-``k`` sample covariance over times ``(a, b]``.

    ``(1 / ((b - a) p)) sum_{t=a+1}^{b} unfold(X_t, k) unfold(X_t, k).T``.
    """
    s = _as_series(s)
    s.require_complete()
    if b is None:
        b = s.T
    if not 0 <= a < b <= s.T:
        raise InvalidInputError(f"empty or invalid interval ({a}, {b}] for T={s.T}")
    if not 0 <= k < s.K:
        raise InvalidInputError(f"mode {k} out of range for K={s.K}")
    return mode_gram(s.data[a:b], k) / ((b - a) * s.p)


def top_eigenvectors(sym: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading ``r`` eigenpairs of a symmetric matrix, deterministic signs.

    Eigenvalues are returned in full (descending); each retained eigenvector
    is flipped so its largest-magnitude entry (first on ties) is positive.
    """
    sym = 0.5 * (sym + sym.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = vals[::-1]
    vecs = vecs[:, ::-1][:, :r]
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def _check_ranks(dims: Sequence[int], ranks: Sequence[int]) -> tuple[int, ...]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(dims):
        raise DimensionMismatchError(f"{len(ranks)} ranks for an order-{len(dims)} series")
    for k, (r, p) in enumerate(zip(ranks, dims)):
        if not 1 <= r <= p:
            raise InvalidInputError(f"rank {r} invalid for mode {k} of size {p}")
    return ranks


def preliminary_loadings(s, ranks) -> LoadingSet:
    """One-step estimator: ``sqrt(p_k)`` times the leading eigenvectors of each mode covariance."""
    s = _as_series(s)
    s.require_complete()
    ranks = _check_ranks(s.dims, ranks)
    loadings, eigs = [], []
    for k, r in enumerate(ranks):
        vals, vecs = top_eigenvectors(mode_covariance(s, k), r)
        loadings.append(math.sqrt(s.dims[k]) * vecs)
        eigs.append(vals)
    return LoadingSet(loadings, "preliminary", eigs)


def projected_covariance(data: np.ndarray, k: int, projectors: Sequence[np.ndarray]) -> np.ndarray:
    """Un-normalized ``sum_t Y_t Y_t.T`` with ``Y_t = unfold(X_t, k) kron(projectors_{-k})``.

    ``projectors[k]`` is ignored.  The ``1 / p_{-k}`` scaling is left to the caller.
    """
    z = data
    others = [l for l in range(len(projectors)) if l != k]
    # shrink the biggest modes first
    for l in sorted(others, key=lambda l: -data.shape[l + 1]):
        z = mode_product(z, projectors[l].T, l + 1)
    return mode_gram(z, k)


def projected_mode_covariance(s, k: int, prelim: Sequence[np.ndarray]) -> np.ndarray:
    """``(T p_k)^{-1} sum_t Y_{k,t} Y_{k,t}.T`` with ``Y_{k,t} = p_{-k}^{-1} unfold(X_t, k) L_{-k}``."""
    s = _as_series(s)
    pk = s.dims[k]
    p_minus = s.p // pk
    g = projected_covariance(s.data, k, prelim)
    return g / (p_minus ** 2 * s.T * pk)


def estimate_loadings(s, ranks) -> LoadingSet:
    """Two-step projected loading estimator.

    The preliminary loadings of each mode are used to project the other
    modes before the final eigendecomposition.
    """
    s = _as_series(s)
    s.require_complete()
    ranks = _check_ranks(s.dims, ranks)
    prelim = preliminary_loadings(s, ranks).loadings
    loadings, eigs = [], []
    for k, r in enumerate(ranks):
        vals, vecs = top_eigenvectors(projected_mode_covariance(s, k, prelim), r)
        loadings.append(math.sqrt(s.dims[k]) * vecs)
        eigs.append(vals)
    return LoadingSet(loadings, "global", eigs)


def rank_upper_bound(p_k: int) -> int:
    return -(-p_k // 3)


def rank_from_eigenvalues(eigs: Sequence[float], rbar: int) -> int:
    """Eigenvalue-ratio estimate ``argmax_{1 <= l <= rbar} lambda_l / lambda_{l+1}``.

    ``eigs`` must be sorted in decreasing order with at least ``rbar + 1``
    entries.  A (numerically) zero ``lambda_{l+1}`` makes that ratio infinite,
    so the first such ``l`` is returned.
    """
    eigs = np.asarray(eigs, dtype=float)
    if rbar < 1 or eigs.size < rbar + 1:
        raise InvalidInputError(f"need at least {rbar + 1} eigenvalues, got {eigs.size}")
    tol = np.finfo(float).eps * max(eigs[0], 0.0)
    best, best_l = -np.inf, 1
    for l in range(1, rbar + 1):
        nxt = eigs[l]
        if nxt <= tol:
            return l
        ratio = eigs[l - 1] / nxt
        if ratio > best:
            best, best_l = ratio, l
    return best_l


def estimate_ranks(s, return_eigenvalues: bool = False):
    """Factor numbers by the eigenvalue ratio of the projected mode covariances.

    Preliminary loadings are taken at the cap ``ceil(p_k / 3)`` for every mode.
    """
    s = _as_series(s)
    s.require_complete()
    if s.T < 2:
        raise SegmentTooShortError(f"rank estimation needs T >= 2, got {s.T}")
    for k, p in enumerate(s.dims):
        if p < 4:
            raise InvalidInputError(f"rank estimation needs p_k >= 4 (mode {k} has {p})")
    caps = [rank_upper_bound(p) for p in s.dims]
    prelim = preliminary_loadings(s, caps).loadings
    ranks, eigs = [], []
    for k, cap in enumerate(caps):
        vals = np.linalg.eigvalsh(projected_mode_covariance(s, k, prelim))[::-1]
        eigs.append(vals)
        ranks.append(rank_from_eigenvalues(vals, cap))
    ranks = tuple(ranks)
    return (ranks, eigs) if return_eigenvalues else ranks


def estimate_pseudo_factors(s, L: LoadingSet | Sequence[np.ndarray]) -> np.ndarray:
    """``G_t = p^{-1} X_t x_1 L_1.T ... x_K L_K.T`` for every ``t``; shape ``(T, r_1, ..., r_K)``."""
    s = _as_series(s)
    loadings = L.loadings if isinstance(L, LoadingSet) else list(L)
    if len(loadings) != s.K:
        raise DimensionMismatchError(f"{len(loadings)} loadings for an order-{s.K} series")
    z = s.data
    for k in sorted(range(s.K), key=lambda k: -s.dims[k]):
        if loadings[k].shape[0] != s.dims[k]:
            raise DimensionMismatchError(
                f"mode-{k} loading has {loadings[k].shape[0]} rows, series has p_k={s.dims[k]}"
            )
        z = mode_product(z, loadings[k].T, k + 1)
    return np.ascontiguousarray(z) / s.p


@dataclass(frozen=True)
class PseudoFactorStats:
    """Stacked ``vech(unfold(G_t, k) unfold(G_t, k).T)`` over modes, with prefix sums.

    ``V[t-1]`` is the vector at time ``t``; ``S[t] = V[0] + ... + V[t-1]`` and
    ``S[0] = 0``.
    """

    V: np.ndarray
    S: np.ndarray
    ranks: tuple[int, ...]

    @property
    def T(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]

    @property
    def offsets(self) -> list[int]:
        out = [0]
        for r in self.ranks:
            out.append(out[-1] + vech_dim(r))
        return out

    def block(self, k: int) -> slice:
        off = self.offsets
        return slice(off[k], off[k + 1])

    def interval_mean(self, a: int, b: int) -> np.ndarray:
        if not 0 <= a < b <= self.T:
            raise InvalidInputError(f"empty or invalid interval ({a}, {b}] for T={self.T}")
        return (self.S[b] - self.S[a]) / (b - a)

    def mode_covariance(self, k: int, a: int, b: int) -> np.ndarray:
        """Mean of ``unfold(G_t, k) unfold(G_t, k).T`` over ``(a, b]``."""
        from .tensor import unvech

        return unvech(self.interval_mean(a, b)[self.block(k)])


def stacked_second_moments(G: np.ndarray) -> np.ndarray:
    """Per-time stacked vech of the mode-wise second moments of ``G`` (shape ``(T, r_1..r_K)``)."""
    G = np.asarray(G, dtype=float)
    T = G.shape[0]
    ranks = G.shape[1:]
    blocks = []
    for k, r in enumerate(ranks):
        gk = np.moveaxis(G, k + 1, 1).reshape(T, r, -1)
        m = np.einsum("tab,tcb->tac", gk, gk)
        rows, cols = np.triu_indices(r)
        # column-major lower triangle, matching tensor.vech
        blocks.append(m[:, cols, rows])
    return np.concatenate(blocks, axis=1)


def pseudo_factor_stats(G: np.ndarray) -> PseudoFactorStats:
    G = np.asarray(G, dtype=float)
    V = stacked_second_moments(G)
    S = np.zeros((V.shape[0] + 1, V.shape[1]))
    np.cumsum(V, axis=0, out=S[1:])
    return PseudoFactorStats(V, S, tuple(int(r) for r in G.shape[1:]))
