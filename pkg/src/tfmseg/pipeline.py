"""End-to-end detection: ranks, loadings, pseudo-factors, weights, intervals, search, mode-id."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from collections.abc import Sequence

import numpy as np

from . import __version__
from .errors import InvalidInputError
from .factor import (
    LoadingSet,
    PseudoFactorStats,
    _as_series,
    estimate_loadings,
    estimate_pseudo_factors,
    estimate_ranks,
    pseudo_factor_stats,
)
from .modeid import DEFAULT_ZETA_MULTIPLIER, ModeIdResult, ModeInformedLoadings, identify_modes, mode_informed_loadings
from .segmentation import (
    DEFAULT_PI_COEFFS_FILE,
    ChangePointReport,
    DetectorParams,
    SeededIntervalSet,
    bartlett_bandwidth,
    default_trim,
    generate_seeded_intervals,
    read_pi_coefficients,
    tfmseg,
    threshold_pi,
    weight_matrix,
)


@dataclass
class DetectConfig:
    """Tuning knobs; ``None`` means the data-driven default."""

    ranks: Sequence[int] | None = None
    pi_coeffs: str | Path | dict | None = None
    threshold: float | None = None
    zeta_multiplier: float = DEFAULT_ZETA_MULTIPLIER
    mu: float | None = None
    trim: int | None = None
    bandwidth: int | None = None
    weight_floor: float = 1e-10
    endpoint_mode: str = "practical"
    identify: bool = True
    mode_informed: bool = False


@dataclass
class Detection:
    T: int
    dims: tuple[int, ...]
    ranks: tuple[int, ...]
    ranks_estimated: bool
    loadings: LoadingSet
    stats: PseudoFactorStats
    intervals: SeededIntervalSet
    params: DetectorParams
    bandwidth: int
    coefficients_source: str
    report: ChangePointReport
    modeid: ModeIdResult | None = None
    informed: ModeInformedLoadings | None = None
    timing: dict = field(default_factory=dict)

    @property
    def thetas(self) -> list[int]:
        return self.report.thetas


def detect(s, cfg: DetectConfig | None = None) -> Detection:
    """Run the full detection pipeline on a fully observed series."""
    cfg = cfg or DetectConfig()
    s = _as_series(s)
    s.require_complete()
    if s.T < 8:
        raise InvalidInputError(f"detection needs T >= 8, got {s.T}")
    timing = {}
    t0 = time.perf_counter()
    if cfg.ranks is None:
        ranks = estimate_ranks(s)
        estimated = True
    else:
        ranks = tuple(int(r) for r in cfg.ranks)
        estimated = False
    loadings = estimate_loadings(s, ranks)
    G = estimate_pseudo_factors(s, loadings)
    stats = pseudo_factor_stats(G)
    timing["factor_model"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    bw = cfg.bandwidth if cfg.bandwidth is not None else bartlett_bandwidth(s.T)
    W = weight_matrix(stats, bw, cfg.weight_floor)
    iv = generate_seeded_intervals(s.T, cfg.mu)
    trim = cfg.trim if cfg.trim is not None else default_trim(s.T)
    coeffs = None
    if cfg.threshold is not None:
        pi = float(cfg.threshold)
        source = "override"
    else:
        if isinstance(cfg.pi_coeffs, dict):
            coeffs = dict(cfg.pi_coeffs)
            source = "inline"
        else:
            coeffs = read_pi_coefficients(cfg.pi_coeffs)
            source = str(cfg.pi_coeffs) if cfg.pi_coeffs is not None else f"default:{DEFAULT_PI_COEFFS_FILE.name}"
        pi = threshold_pi(s.T, ranks, coeffs)
    dp = DetectorParams(pi, W, trim, coeffs)
    report = tfmseg(stats, iv, dp)
    timing["segmentation"] = time.perf_counter() - t1

    det = Detection(s.T, s.dims, ranks, estimated, loadings, stats, iv, dp, bw, source, report, timing=timing)
    if cfg.identify:
        t2 = time.perf_counter()
        det.modeid = identify_modes(
            stats, report.thetas, iv.finer, p=s.p,
            zeta_multiplier=cfg.zeta_multiplier, endpoint_mode=cfg.endpoint_mode,
        )
        timing["mode_identification"] = time.perf_counter() - t2
        if cfg.mode_informed:
            t3 = time.perf_counter()
            det.informed = mode_informed_loadings(s, report.thetas, det.modeid.modes, ranks)
            timing["mode_informed_loadings"] = time.perf_counter() - t3
    timing["total"] = time.perf_counter() - t0
    return det


def column_basis(A: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``col(A)``; true loadings can lose rank after a change."""
    u, sv, _ = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    return u[:, sv > rtol * sv[0]] if sv.size and sv[0] > 0 else u[:, :0]


def report_document(det: Detection, truth=None, include_timing: bool = True) -> dict:
    """JSON-ready report; modes are 1-based as in the input file formats."""
    from .modeid import loading_distance

    rep = det.report
    doc = {
        "format": "tfmseg-report",
        "version": __version__,
        "T": det.T,
        "dims": list(det.dims),
        "config": {
            "ranks": list(det.ranks),
            "ranks_estimated": det.ranks_estimated,
            "d": det.stats.d,
            "mu": det.intervals.mu,
            "levels": det.intervals.finest_level,
            "n_intervals": len(det.intervals),
            "trim": det.params.trim,
            "bandwidth": det.bandwidth,
            "pi": det.params.threshold,
            "pi_coefficients": det.params.coefficients,
            "coefficients_source": det.coefficients_source,
            "weights": det.params.weights.tolist(),
        },
        "change_points": [
            {"theta": e.theta, "detector": e.value, "interval": list(e.interval), "level": e.level}
            for e in rep.estimates
        ],
    }
    if det.modeid is not None:
        mi = det.modeid
        doc["config"]["zeta"] = mi.zeta
        doc["config"]["zeta_scale"] = mi.scale
        doc["config"]["endpoint_mode"] = mi.endpoint_mode
        doc["mode_identification"] = [
            {
                "theta": rep.estimates[j].theta,
                "endpoints": list(mi.endpoints[j]),
                "segments": [list(mi.segments[j][0]), list(mi.segments[j][1])],
                "modes": sorted(k + 1 for k in mi.modes[j]),
                "xi_norms": mi.norms[j].tolist(),
                "scaled_xi_norms": mi.scaled_norms[j].tolist(),
            }
            for j in range(len(mi.endpoints))
        ]
        doc["endpoint_fallbacks"] = [[j, side] for j, side in mi.fallbacks]
    if det.informed is not None:
        summary = []
        for k, runs in enumerate(det.informed.runs):
            for run in runs:
                entry = {
                    "mode": k + 1,
                    "segments": [run.first + 1, run.last + 1],
                    "interval": list(run.interval),
                    "rank": int(run.loading.shape[1]),
                    "provenance": run.provenance,
                }
                if truth is not None and truth.q == len(det.thetas):
                    entry["distance_to_truth"] = [
                        loading_distance(run.loading, column_basis(truth.loading(j, k)))
                        for j in range(run.first, run.last + 1)
                    ]
                summary.append(entry)
        doc["mode_informed_loadings"] = summary
    if include_timing:
        doc["timing"] = dict(det.timing)
    return doc
