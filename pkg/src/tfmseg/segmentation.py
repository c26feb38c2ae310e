"""Seeded intervals, the mode-aggregated CUSUM detector and the TFMseg search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DimensionMismatchError, InvalidInputError, MissingCoefficientsError
from .factor import PseudoFactorStats

PI_COEFF_NAMES = ("intercept", "sqrt_d", "sqrt_logT", "loglogT_over_sqrtlogT", "inv_sqrtlogT")
DEFAULT_PI_COEFFS_FILE = Path(__file__).with_name("data") / "pi_coefficients.txt"


def default_mu(T: int) -> float:
    """Finest seeded level giving a minimum interval length of ``0.5 T / log T``."""
    return math.log2(4.0 * math.log(T))


def default_trim(T: int) -> int:
    return math.ceil(0.25 * T / math.log(T))


def _level_intervals(T: int, h: int) -> list[tuple[int, int]]:
    # m_h = T / 2^h, so ceil(T / m_h) - 1 = 2^h - 1; integer arithmetic keeps endpoints exact
    n = 2 ** h
    out = []
    for i in range(1, n):
        a = ((i - 1) * T) // n
        b = -((-(i + 1) * T) // n)
        out.append((max(a, 0), min(b, T)))
    return out


@dataclass(frozen=True)
class SeededIntervalSet:
    """Deduplicated multiscale intervals ``(a, b]`` plus the finer single-level set."""

    T: int
    mu: float
    starts: np.ndarray
    ends: np.ndarray
    levels: np.ndarray
    finer: tuple[tuple[int, int], ...]

    @property
    def intervals(self) -> list[tuple[int, int]]:
        return list(zip(self.starts.tolist(), self.ends.tolist()))

    @property
    def finest_level(self) -> int:
        return int(math.floor(self.mu))

    def __len__(self) -> int:
        return len(self.starts)


def generate_seeded_intervals(T: int, mu: float | None = None) -> SeededIntervalSet:
    """Seeded intervals at levels ``1..floor(mu)`` and the finer set at ``floor(mu) + 1``.

    Intervals repeated across levels keep their lowest level.
    """
    T = int(T)
    if T < 8:
        raise InvalidInputError(f"seeded intervals need T >= 8, got {T}")
    if mu is None:
        mu = default_mu(T)
    top = int(math.floor(mu))
    if top < 1:
        raise InvalidInputError(f"mu={mu} gives no seeded level")
    seen: dict[tuple[int, int], int] = {}
    for h in range(1, top + 1):
        for iv in _level_intervals(T, h):
            if iv[1] > iv[0] and iv not in seen:
                seen[iv] = h
    pairs = list(seen.items())
    starts = np.array([iv[0] for iv, _ in pairs], dtype=np.int64)
    ends = np.array([iv[1] for iv, _ in pairs], dtype=np.int64)
    levels = np.array([h for _, h in pairs], dtype=np.int64)
    finer = tuple(dict.fromkeys(iv for iv in _level_intervals(T, top + 1) if iv[1] > iv[0]))
    return SeededIntervalSet(T, float(mu), starts, ends, levels, finer)


def cusum(stats: PseudoFactorStats, a: int, tau: int, b: int) -> np.ndarray:
    """Scaled difference of the mean stacked second moments on ``(tau, b]`` and ``(a, tau]``."""
    if not 0 <= a < tau < b <= stats.T:
        raise InvalidInputError(f"need 0 <= a < tau < b <= T, got ({a}, {tau}, {b})")
    S = stats.S
    right = (S[b] - S[tau]) / (b - tau)
    left = (S[tau] - S[a]) / (tau - a)
    return math.sqrt((tau - a) * (b - tau) / (b - a)) * (right - left)


def detector(M: np.ndarray, W: np.ndarray) -> float:
    """``sqrt(M' W^{-1} M)`` for a diagonal weight given as its diagonal."""
    M = np.asarray(M, dtype=float)
    W = np.asarray(W, dtype=float)
    if M.shape != W.shape:
        raise DimensionMismatchError(f"CUSUM of length {M.shape} vs weight of length {W.shape}")
    if np.any(W <= 0):
        raise InvalidInputError("weights must be positive")
    return float(np.sqrt(np.sum(M * M / W)))


def bartlett_bandwidth(T: int) -> int:
    """``floor(T^{1/4})`` computed exactly."""
    w = int(round(T ** 0.25))
    while w ** 4 > T:
        w -= 1
    while (w + 1) ** 4 <= T:
        w += 1
    return w


def floor_weights(diag: np.ndarray, rel_floor: float = 1e-10) -> np.ndarray:
    diag = np.asarray(diag, dtype=float)
    top = float(np.max(diag)) if diag.size else 0.0
    eps = top * rel_floor if top > 0 else 1e-300
    return np.maximum(diag, eps)


def long_run_diagonal(V: np.ndarray, bandwidth: int | None = None) -> np.ndarray:
    """Bartlett long-run variance diagonal of the centred rows of ``V`` (no floor)."""
    V = np.asarray(V, dtype=float)
    T = V.shape[0]
    if bandwidth is None:
        bandwidth = bartlett_bandwidth(T)
    g = V - V.mean(axis=0)
    return kernels.bartlett_diag(g, bandwidth)


def weight_matrix(stats: PseudoFactorStats, bandwidth: int | None = None, rel_floor: float = 1e-10) -> np.ndarray:
    """Diagonal weight for the detector, floored at ``rel_floor * max``."""
    if stats.T < 2:
        raise InvalidInputError("weight estimation needs T >= 2")
    return floor_weights(long_run_diagonal(stats.V, bandwidth), rel_floor)


def pi_regressors(T: int, d: int) -> np.ndarray:
    lt = math.log(T)
    return np.array([1.0, math.sqrt(d), math.sqrt(lt), math.log(lt) / math.sqrt(lt), 1.0 / math.sqrt(lt)])


def read_pi_coefficients(path: str | Path | None = None) -> dict[str, float]:
    """Read a ``name=value`` coefficient file (the shipped default when ``path`` is None)."""
    path = Path(path) if path is not None else DEFAULT_PI_COEFFS_FILE
    if not path.is_file():
        raise MissingCoefficientsError(f"coefficient file not found: {path}")
    coeffs = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MissingCoefficientsError(f"{path}:{lineno}: expected name=value")
        name, value = (part.strip() for part in line.split("=", 1))
        try:
            coeffs[name] = float(value)
        except ValueError as exc:
            raise MissingCoefficientsError(f"{path}:{lineno}: bad number {value!r}") from exc
    missing = [n for n in PI_COEFF_NAMES if n not in coeffs]
    if missing:
        raise MissingCoefficientsError(f"{path}: missing coefficients {', '.join(missing)}")
    return {n: coeffs[n] for n in PI_COEFF_NAMES}


def write_pi_coefficients(coeffs, path: str | Path, comment: str | None = None) -> None:
    if not isinstance(coeffs, dict):
        coeffs = dict(zip(PI_COEFF_NAMES, coeffs))
    lines = [f"# {line}" for line in (comment or "").splitlines()]
    lines += [f"{n}={float(coeffs[n])!r}" for n in PI_COEFF_NAMES]
    Path(path).write_text("\n".join(lines) + "\n")


def threshold_pi(T: int, ranks, coeffs=None) -> float:
    """Detection threshold from the fitted regression on ``T`` and ``d``.

    ``coeffs`` is a mapping keyed by :data:`PI_COEFF_NAMES`, a 5-sequence in
    that order, a file path, or None for the shipped default file.
    """
    if coeffs is None or isinstance(coeffs, (str, Path)):
        coeffs = read_pi_coefficients(coeffs)
    if isinstance(coeffs, dict):
        beta = np.array([coeffs[n] for n in PI_COEFF_NAMES], dtype=float)
    else:
        beta = np.asarray(coeffs, dtype=float)
    if beta.shape != (5,):
        raise InvalidInputError("threshold regression needs exactly five coefficients")
    d = sum(r * (r + 1) // 2 for r in ranks)
    return max(0.0, float(pi_regressors(T, d) @ beta))


@dataclass
class DetectorParams:
    threshold: float
    weights: np.ndarray
    trim: int
    coefficients: dict[str, float] | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.threshold < 0:
            raise InvalidInputError("threshold must be nonnegative")
        if np.any(self.weights <= 0):
            raise InvalidInputError("weights must be positive")
        if self.trim < 0:
            raise InvalidInputError("trimming must be nonnegative")


@dataclass
class ChangePointEstimate:
    theta: int
    value: float
    interval: tuple[int, int]
    level: int


@dataclass
class ChangePointReport:
    estimates: list[ChangePointEstimate]
    threshold: float
    trim: int
    mu: float
    scan_taus: np.ndarray = field(repr=False, default=None)
    scan_values: np.ndarray = field(repr=False, default=None)

    @property
    def thetas(self) -> list[int]:
        return [e.theta for e in self.estimates]

    @property
    def q(self) -> int:
        return len(self.estimates)


def scan_all(stats: PseudoFactorStats, iv: SeededIntervalSet, weights: np.ndarray, trim: int):
    """Trimmed detector maxima ``(tau_l, T_l)`` over every seeded interval."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (stats.d,):
        raise DimensionMismatchError(f"weight of length {weights.shape} for d={stats.d}")
    if iv.T != stats.T:
        raise DimensionMismatchError(f"intervals built for T={iv.T}, statistics have T={stats.T}")
    return kernels.scan_intervals(stats.S, 1.0 / weights, iv.starts, iv.ends, trim)


def max_detector(stats: PseudoFactorStats, iv: SeededIntervalSet, weights: np.ndarray, trim: int = 0) -> float:
    """Largest detector value over all seeded intervals (untrimmed by default)."""
    _, vals = scan_all(stats, iv, weights, trim)
    return float(vals.max()) if vals.size else 0.0


def tfmseg(stats: PseudoFactorStats, iv: SeededIntervalSet, dp: DetectorParams) -> ChangePointReport:
    """Narrowest-over-threshold selection over seeded intervals.

    Among intervals whose trimmed maximal detector exceeds the threshold,
    the shortest (then largest statistic, then smallest start) is taken, its
    maximizer emitted, and every interval containing it discarded.
    """
    taus, vals = scan_all(stats, iv, dp.weights, dp.trim)
    starts, ends = iv.starts, iv.ends
    alive = [i for i in range(len(starts)) if vals[i] > dp.threshold]
    estimates = []
    while alive:
        sel = min(alive, key=lambda i: (ends[i] - starts[i], -vals[i], starts[i]))
        theta = int(taus[sel])
        estimates.append(
            ChangePointEstimate(theta, float(vals[sel]), (int(starts[sel]), int(ends[sel])), int(iv.levels[sel]))
        )
        alive = [i for i in alive if not (starts[i] < theta <= ends[i])]
    estimates.sort(key=lambda e: e.theta)
    return ChangePointReport(estimates, float(dp.threshold), int(dp.trim), iv.mu, taus, vals)
