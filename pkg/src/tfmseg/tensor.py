"""Dense tensor primitives.

Tensors are plain :class:`numpy.ndarray` objects indexed logically as
``t[i_1, ..., i_K]``.  Whenever a tensor is linearized (unfoldings, files)
mode 1 varies fastest, so the mode-k unfolding has columns ordered
consistently with Kronecker products taken in descending mode index::

    unfold(t x_1 L_1 ... x_K L_K, k) == L_k @ unfold(t, k) @ kron([L_K, ..., L_1 without k]).T

Modes are 0-based in the Python API.
"""

from __future__ import annotations

from collections.abc import Sequence
from functools import reduce

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError


def _check_mode(ndim: int, k: int) -> None:
    if not 0 <= k < ndim:
        raise InvalidInputError(f"mode {k} out of range for an order-{ndim} tensor")


def unfold(t: np.ndarray, k: int) -> np.ndarray:
    """Mode-``k`` matricization, shape ``(p_k, prod(p_{-k}))``."""
    t = np.asarray(t)
    _check_mode(t.ndim, k)
    return np.reshape(np.moveaxis(t, k, 0), (t.shape[k], -1), order="F")


def fold(m: np.ndarray, k: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), k)
    m = np.asarray(m)
    rest = dims[:k] + dims[k + 1:]
    if m.shape != (dims[k], int(np.prod(rest, dtype=np.int64))):
        raise DimensionMismatchError(f"matrix of shape {m.shape} cannot fold into {dims} along mode {k}")
    full = np.reshape(m, (dims[k],) + rest, order="F")
    return np.moveaxis(full, 0, k)


def mode_product(t: np.ndarray, m: np.ndarray, k: int) -> np.ndarray:
    """Mode-``k`` product ``t x_k m``; ``unfold(result, k) == m @ unfold(t, k)``."""
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t.ndim, k)
    if m.ndim != 2 or m.shape[1] != t.shape[k]:
        raise DimensionMismatchError(
            f"matrix with {m.shape[-1]} columns applied to mode {k} of size {t.shape[k]}"
        )
    return np.moveaxis(np.tensordot(m, t, axes=([1], [k])), 0, k)


def multi_mode_product(t: np.ndarray, ms: Sequence[np.ndarray | None], transpose: bool = False) -> np.ndarray:
    """Apply ``t x_1 ms[0] x_2 ms[1] ...``; ``None`` entries skip a mode."""
    out = np.asarray(t)
    for k, m in enumerate(ms):
        if m is None:
            continue
        out = mode_product(out, m.T if transpose else m, k)
    return out


def vech(s: np.ndarray) -> np.ndarray:
    """Column-major lower triangle (diagonal included) of a square matrix."""
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatchError(f"vech needs a square matrix, got {s.shape}")
    n = s.shape[0]
    # column-major lower triangle == row-major upper triangle of the transpose
    rows, cols = np.triu_indices(n)
    return s.T[rows, cols].copy()


def unvech(v: np.ndarray) -> np.ndarray:
    """Rebuild the symmetric matrix whose :func:`vech` is ``v``."""
    v = np.asarray(v, dtype=float)
    n = vech_order(v.shape[-1])
    out = np.zeros(v.shape[:-1] + (n, n))
    rows, cols = np.triu_indices(n)
    out[..., cols, rows] = v
    out[..., rows, cols] = v
    return out


def vech_dim(n: int) -> int:
    return n * (n + 1) // 2


def vech_order(m: int) -> int:
    n = int((np.sqrt(8 * m + 1) - 1) // 2)
    if vech_dim(n) != m:
        raise DimensionMismatchError(f"{m} is not a triangular number")
    return n


def kron(ms: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of ``ms`` in the given order."""
    if len(ms) == 0:
        raise InvalidInputError("kron of an empty list")
    return reduce(np.kron, [np.atleast_2d(np.asarray(m, dtype=float)) for m in ms])


def kron_except(ms: Sequence[np.ndarray], k: int) -> np.ndarray:
    """``kron`` of all matrices but the ``k``-th, in descending mode order."""
    rest = [m for i, m in enumerate(ms) if i != k]
    if not rest:
        return np.ones((1, 1))
    return kron(rest[::-1])


def to_storage(t: np.ndarray) -> np.ndarray:
    """Flatten with mode 1 fastest."""
    return np.ravel(np.asarray(t), order="F")


def from_storage(data: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    data = np.asarray(data)
    if data.size != int(np.prod(dims, dtype=np.int64)):
        raise DimensionMismatchError(f"{data.size} entries cannot fill dims {dims}")
    return np.reshape(data, dims, order="F")
