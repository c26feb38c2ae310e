"""Series, ground-truth, scenario and report file formats.

Binary series layout (all little-endian)::

    b"TFTS" | version u16 | K u16 | dims K x u64 | T u64 | dtype u8 | has_mask u8
    | T * prod(dims) float64, each observation mode-1 fastest, time outermost
    | [T * prod(dims) uint8 mask, 1 = observed]   (only when has_mask)

CSV series are long format with a header ``t,i_1,...,i_K,value`` and 1-based
indices.  Cells never listed are missing.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError, ParseError
from .factor import TensorSeries
from .simgen import GroundTruth, SimScenario

MAGIC = b"TFTS"
VERSION = 1
DTYPE_F64LE = 1


def _observations_to_storage(data: np.ndarray) -> np.ndarray:
    # (T, p_1..p_K) -> (T, prod p) with mode 1 fastest inside each row
    T = data.shape[0]
    return np.ascontiguousarray(np.transpose(data, (0,) + tuple(range(data.ndim - 1, 0, -1)))).reshape(T, -1)


def _storage_to_observations(flat: np.ndarray, T: int, dims: tuple[int, ...]) -> np.ndarray:
    rev = flat.reshape((T,) + dims[::-1])
    return np.ascontiguousarray(np.transpose(rev, (0,) + tuple(range(len(dims), 0, -1))))


def write_series_binary(s: TensorSeries, path) -> None:
    K = s.K
    header = MAGIC + struct.pack("<HH", VERSION, K) + struct.pack(f"<{K}Q", *s.dims)
    header += struct.pack("<QBB", s.T, DTYPE_F64LE, int(s.mask is not None))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_observations_to_storage(s.data).astype("<f8", copy=False).tobytes())
        if s.mask is not None:
            fh.write(_observations_to_storage(s.mask).astype(np.uint8).tobytes())


def read_series_binary(path) -> TensorSeries:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParseError(f"{path}: not a TFTS file")
    try:
        version, K = struct.unpack_from("<HH", raw, 4)
        if version != VERSION:
            raise ParseError(f"{path}: unsupported format version {version}")
        if K < 1:
            raise ParseError(f"{path}: tensor order must be positive")
        off = 8
        dims = struct.unpack_from(f"<{K}Q", raw, off)
        off += 8 * K
        T, dtype, has_mask = struct.unpack_from("<QBB", raw, off)
        off += 10
    except struct.error as exc:
        raise ParseError(f"{path}: truncated header") from exc
    if dtype != DTYPE_F64LE:
        raise ParseError(f"{path}: unsupported element type tag {dtype}")
    dims = tuple(int(p) for p in dims)
    n = int(T) * int(np.prod(dims, dtype=np.int64))
    expected = off + 8 * n + (n if has_mask else 0)
    if len(raw) != expected:
        raise ParseError(f"{path}: payload has {len(raw) - off} bytes, header implies {expected - off}")
    flat = np.frombuffer(raw, dtype="<f8", count=n, offset=off).astype(np.float64)
    data = _storage_to_observations(flat, int(T), dims)
    mask = None
    if has_mask:
        m = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off + 8 * n).astype(bool)
        mask = _storage_to_observations(m, int(T), dims)
    return TensorSeries(data, mask)


def write_series_csv(s: TensorSeries, path) -> None:
    K = s.K
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"i_{k + 1}" for k in range(K)] + ["value"])
        for t in range(s.T):
            obs = s.data[t]
            for idx in np.ndindex(*s.dims[::-1]):
                cell = idx[::-1]
                if s.mask is not None and not s.mask[(t,) + cell]:
                    continue
                w.writerow([t + 1, *(i + 1 for i in cell), repr(float(obs[cell]))])


def read_series_csv(path) -> TensorSeries:
    """Parse a long-format CSV; unlisted cells become masked, duplicates are rejected."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        K = len(header) - 2
        if K < 1 or header[0] != "t" or header[-1] != "value" or header[1:-1] != [f"i_{k + 1}" for k in range(K)]:
            raise ParseError(f"{path}: header must be t,i_1,...,i_K,value; got {','.join(header)}")
        rows, vals = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != K + 2:
                raise ParseError(f"{path}:{lineno}: expected {K + 2} fields, got {len(row)}")
            try:
                idx = [int(c) for c in row[:-1]]
                v = float(row[-1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if min(idx) < 1:
                raise ParseError(f"{path}:{lineno}: indices are 1-based")
            rows.append(idx)
            vals.append(v)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    idx = np.asarray(rows, dtype=np.int64) - 1
    shape = tuple(int(m) + 1 for m in idx.max(axis=0))
    data = np.full(shape, np.nan)
    seen = np.zeros(shape, dtype=bool)
    for n, cell in enumerate(map(tuple, idx)):
        if seen[cell]:
            raise ParseError(f"{path}:{n + 2}: duplicate cell (t, i) = {tuple(c + 1 for c in cell)}")
        seen[cell] = True
        data[cell] = vals[n]
    mask = None if seen.all() else seen
    return TensorSeries(data, mask)


def load_series(path, format: str | None = None) -> TensorSeries:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"no such file: {path}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "binary"
    if format == "binary":
        return read_series_binary(path)
    if format == "csv":
        return read_series_csv(path)
    raise InvalidInputError(f"unknown series format {format!r}")


def save_series(s: TensorSeries, path, format: str | None = None) -> None:
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "binary"
    if format == "binary":
        write_series_binary(s, path)
    elif format == "csv":
        write_series_csv(s, path)
    else:
        raise InvalidInputError(f"unknown series format {format!r}")


def save_truth(gt: GroundTruth, path) -> None:
    Path(path).write_text(json.dumps(gt.to_dict(), indent=1))


def load_truth(path) -> GroundTruth:
    try:
        return GroundTruth.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"{path}: not a ground-truth document ({exc})") from None


def save_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from None


def _parse_tuple(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace("(", "").replace(")", "").split(",") if x.strip())


def read_scenario(path) -> SimScenario:
    """``key=value`` lines naming :class:`SimScenario` fields."""
    kinds = {f.name: f.type for f in fields(SimScenario)}
    kw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in kinds:
            raise ParseError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in ("dims", "ranks"):
                kw[key] = _parse_tuple(value)
            elif key in ("T", "seed", "replication"):
                kw[key] = int(value)
            elif key == "rho_f":
                kw[key] = float(value)
            elif key == "missing":
                kw[key] = value.lower() in ("1", "true", "yes")
            else:
                kw[key] = value
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return SimScenario(**kw)


def write_scenario(sc: SimScenario, path) -> None:
    lines = []
    for k, v in asdict(sc).items():
        if isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def check_dims(s: TensorSeries, truth: GroundTruth) -> None:
    if s.T != truth.T:
        raise DimensionMismatchError(f"series has T={s.T}, truth has T={truth.T}")
    dims = tuple(truth.loading(0, k).shape[0] for k in range(len(truth.transforms[0])))
    if dims != tuple(s.dims):
        raise DimensionMismatchError(f"series has dims {tuple(s.dims)}, truth has {dims}")
