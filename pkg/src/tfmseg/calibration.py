"""Monte Carlo calibration of the detection and mode-identification thresholds."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from collections.abc import Sequence

import numpy as np

from .errors import CalibrationError
from .factor import estimate_loadings, estimate_pseudo_factors, pseudo_factor_stats
from .modeid import identify_modes, zeta_scale
from .montecarlo import run_replications
from .segmentation import (
    PI_COEFF_NAMES,
    default_trim,
    generate_seeded_intervals,
    max_detector,
    pi_regressors,
    weight_matrix,
)
from .simgen import SimScenario, generate

log = logging.getLogger(__name__)

FULL_PI_T = (400, 1200, 2000, 2800, 3200, 4000, 4800, 5600)
FULL_DIMS = ((10, 10, 10), (10, 10, 100), (10, 20, 40), (20, 20, 20))
FULL_PI_RANKS = ((2, 2, 2), (2, 3, 2), (2, 3, 3), (3, 3, 3))
REDUCED_PI_T = (400, 1200, 2800, 5600)
REDUCED_DIMS = ((10, 10, 10), (20, 20, 20))
REDUCED_PI_RANKS = ((2, 2, 2), (3, 3, 3))
FULL_ZETA_T = (400, 800, 1600, 3200)

# replication ids are offset per grid cell so every (cell, rep) has its own stream
_CELL_STRIDE = 100_000


@dataclass(frozen=True)
class PiCell:
    T: int
    dims: tuple[int, ...]
    ranks: tuple[int, ...]
    rho_f: float = 0.7

    @property
    def d(self) -> int:
        return sum(r * (r + 1) // 2 for r in self.ranks)


def pi_grid(Ts=FULL_PI_T, dims=FULL_DIMS, ranks=FULL_PI_RANKS, rho_f: float = 0.7) -> list[PiCell]:
    return [PiCell(int(T), tuple(p), tuple(r), rho_f) for T, p, r in product(Ts, dims, ranks)]


def reduced_pi_grid(rho_f: float = 0.7) -> list[PiCell]:
    return pi_grid(REDUCED_PI_T, REDUCED_DIMS, REDUCED_PI_RANKS, rho_f)


def null_max_statistic(sc: SimScenario) -> float:
    """Largest detector over the seeded intervals on one null realization (true ranks).

    The scan is trimmed exactly as in detection, so the fitted threshold is a
    quantile of the statistic it is later compared with.
    """
    s, _ = generate(sc)
    L = estimate_loadings(s, sc.ranks)
    stats = pseudo_factor_stats(estimate_pseudo_factors(s, L))
    W = weight_matrix(stats)
    iv = generate_seeded_intervals(s.T)
    return max_detector(stats, iv, W, trim=default_trim(s.T))


@dataclass
class PiCalibration:
    coefficients: dict[str, float]
    adj_r2: float
    r2: float
    cells: list[PiCell]
    quantiles: np.ndarray
    maxima: list[np.ndarray] = field(repr=False, default_factory=list)
    rank: int = 5

    def fitted(self) -> np.ndarray:
        X = np.array([pi_regressors(c.T, c.d) for c in self.cells])
        return X @ np.array([self.coefficients[n] for n in PI_COEFF_NAMES])


def fit_pi_regression(cells: Sequence[PiCell], y: Sequence[float]):
    """OLS of the quantiles on ``(1, sqrt d, sqrt log T, log log T / sqrt log T, 1 / sqrt log T)``.

    A rank-deficient design gets the minimum-norm solution (logged); the
    adjusted R^2 is NaN when there are no residual degrees of freedom.
    """
    if len(cells) == 0:
        raise CalibrationError("empty calibration grid")
    X = np.array([pi_regressors(c.T, c.d) for c in cells])
    y = np.asarray(y, dtype=float)
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        log.warning("threshold regression design has rank %d < %d; using minimum-norm fit", rank, X.shape[1])
    resid = y - X @ beta
    n = len(y)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    df = n - X.shape[1]
    adj = 1.0 - (1.0 - r2) * (n - 1) / df if df > 0 and ss_tot > 0 else float("nan")
    return dict(zip(PI_COEFF_NAMES, beta.tolist())), r2, adj, int(rank)


def calibrate_pi(
    cells: Sequence[PiCell] | None = None,
    reps: int = 100,
    quantile: float = 0.9,
    seed: int = 0,
    workers: int | None = None,
    progress=None,
) -> PiCalibration:
    """Simulate null series per cell, take the ``quantile`` of the maximal detector, regress on ``T`` and ``d``."""
    cells = list(cells if cells is not None else pi_grid())
    if not cells:
        raise CalibrationError("empty calibration grid")
    maxima, qs = [], []
    for ci, c in enumerate(cells):
        scs = [
            SimScenario("S0", c.T, c.dims, c.ranks, c.rho_f, seed=seed, replication=ci * _CELL_STRIDE + n)
            for n in range(reps)
        ]
        m = np.array(run_replications(null_max_statistic, scs, workers))
        maxima.append(m)
        qs.append(float(np.quantile(m, quantile)))
        if progress is not None:
            progress(ci, c, qs[-1])
    coeffs, r2, adj, rank = fit_pi_regression(cells, qs)
    return PiCalibration(coeffs, adj, r2, cells, np.array(qs), maxima, rank)


@dataclass(frozen=True)
class ZetaCell:
    scenario: str
    T: int
    dims: tuple[int, ...]
    spacing: str = "unequal"
    rho_f: float = 0.7


def zeta_grid(scenarios=("S1", "S2"), Ts=FULL_ZETA_T, dims=FULL_DIMS, spacing="unequal", rho_f=0.7) -> list[ZetaCell]:
    return [ZetaCell(s, int(T), tuple(p), spacing, rho_f) for s, T, p in product(scenarios, Ts, dims)]


def null_scaled_xi(sc: SimScenario) -> list[float]:
    """Scaled ``||Xi||`` at the true change points for modes where the change is not identifiable."""
    s, gt = generate(sc)
    L = estimate_loadings(s, sc.ranks)
    stats = pseudo_factor_stats(estimate_pseudo_factors(s, L))
    mi = identify_modes(stats, gt.thetas, p=s.p, endpoint_mode="practical")
    scale = zeta_scale(s.T, s.p)
    out = []
    for j, true_modes in enumerate(gt.modes):
        out.extend(float(mi.norms[j, k] / scale) for k in range(s.K) if k not in true_modes)
    return out


@dataclass
class ZetaCalibration:
    multiplier: float
    pooled: np.ndarray
    cells: list[ZetaCell]


def calibrate_zeta(
    cells: Sequence[ZetaCell] | None = None,
    reps: int = 100,
    quantile: float = 0.99,
    seed: int = 0,
    workers: int | None = None,
) -> ZetaCalibration:
    """Pooled ``quantile`` of scaled ``||Xi||`` over non-identifiable modes at known change points."""
    cells = list(cells if cells is not None else zeta_grid())
    if not cells:
        raise CalibrationError("empty calibration grid")
    pooled = []
    for ci, c in enumerate(cells):
        scs = [
            SimScenario(c.scenario, c.T, c.dims, (3, 3, 3), c.rho_f, c.spacing, seed=seed,
                        replication=ci * _CELL_STRIDE + n)
            for n in range(reps)
        ]
        for vals in run_replications(null_scaled_xi, scs, workers):
            pooled.extend(vals)
    pooled = np.array(pooled)
    if pooled.size == 0:
        raise CalibrationError("no non-identifiable modes in the grid")
    return ZetaCalibration(float(np.quantile(pooled, quantile)), pooled, cells)
