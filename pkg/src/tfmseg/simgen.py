"""Simulated tensor factor series with change points, and evaluation metrics.

Scenarios (all order 3 unless ranks/dims say otherwise):

* ``S0`` no change point.
* ``S1`` one mode changes at each of three change points: mode 1 by a random
  lower-triangular matrix, mode 2 by ``diag(1, 1, 0)``, mode 3 by a random
  dense matrix.
* ``S2`` as ``S1`` plus a scalar change ``3 I`` on mode 3 at the first change
  and ``diag(1, 0.6, 0.2)`` on mode 2 at the third.
* ``S3`` a single change ``diag(1, 1, 0)`` on mode 1 at ``floor(T / 2)``.

Randomness comes from a Philox (counter-based) generator keyed by
``(seed, replication)``, so replications are independent streams and can run
in any order or in parallel.  Normals use numpy's ziggurat sampler.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from collections.abc import Sequence

import numpy as np

from .errors import InvalidInputError
from .factor import TensorSeries
from .tensor import mode_product

SCENARIOS = ("S0", "S1", "S2", "S3")
BURN_IN = 100


@dataclass(frozen=True)
class SimScenario:
    scenario: str = "S1"
    T: int = 400
    dims: tuple[int, ...] = (20, 20, 20)
    ranks: tuple[int, ...] = (3, 3, 3)
    rho_f: float = 0.0
    spacing: str = "equal"
    missing: bool = False
    seed: int = 0
    replication: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(p) for p in self.dims))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if self.scenario not in SCENARIOS:
            raise InvalidInputError(f"unknown scenario {self.scenario!r}")
        if self.spacing not in ("equal", "unequal"):
            raise InvalidInputError(f"spacing must be 'equal' or 'unequal', got {self.spacing!r}")
        if len(self.dims) != len(self.ranks):
            raise InvalidInputError("dims and ranks must have the same length")
        if any(r < 1 or r > p for r, p in zip(self.ranks, self.dims)):
            raise InvalidInputError(f"ranks {self.ranks} incompatible with dims {self.dims}")
        if self.scenario != "S0" and (len(self.dims) != 3 or self.ranks != (3, 3, 3)):
            raise InvalidInputError(f"{self.scenario} is defined for order-3 tensors with ranks (3, 3, 3)")
        if not -1.0 < self.rho_f < 1.0:
            raise InvalidInputError("rho_f must lie in (-1, 1)")
        if self.T < 8:
            raise InvalidInputError("T must be at least 8")
        thetas = self.thetas
        if any(not 0 < th < self.T for th in thetas) or len(set(thetas)) != len(thetas):
            raise InvalidInputError(f"change points {thetas} invalid for T={self.T}")

    @property
    def thetas(self) -> tuple[int, ...]:
        T = self.T
        if self.scenario == "S0":
            return ()
        if self.scenario == "S3":
            return (T // 2,)
        last = 3 * T // 4 if self.spacing == "equal" else (5 * T) // 8
        return (T // 4, T // 2, last)

    def with_replication(self, n: int) -> "SimScenario":
        return SimScenario(**{**asdict(self), "replication": int(n)})


def rng_for(seed: int, replication: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class GroundTruth:
    """Segment-wise loadings ``base_loadings[k] @ transforms[j][k]`` and change points."""

    T: int
    thetas: list[int]
    base_loadings: list[np.ndarray]
    transforms: list[list[np.ndarray]]
    scenario: str = "custom"
    meta: dict = field(default_factory=dict)

    @property
    def q(self) -> int:
        return len(self.thetas)

    @property
    def K(self) -> int:
        return len(self.transforms[0])

    def loading(self, j: int, k: int) -> np.ndarray:
        return self.base_loadings[k] @ self.transforms[j][k]

    def population_covariance(self, j: int, k: int) -> np.ndarray:
        """Mode-``k`` pseudo-factor second moment on segment ``j`` (0-based)."""
        A = self.transforms[j]
        scale = 1.0
        for l, Al in enumerate(A):
            if l != k:
                scale *= float(np.sum(Al * Al))
        return scale * (A[k] @ A[k].T)

    def population_xi_norms(self, j: int) -> np.ndarray:
        """Spectral norms of the trace-normalized covariance change at change ``j`` (0-based)."""
        out = np.zeros(self.K)
        for k in range(self.K):
            prev = self.population_covariance(j, k)
            nxt = self.population_covariance(j + 1, k)
            xi = nxt / np.trace(nxt) - prev / np.trace(prev)
            out[k] = np.max(np.abs(np.linalg.eigvalsh(0.5 * (xi + xi.T))))
        return out

    @property
    def modes(self) -> list[set[int]]:
        """Modes (0-based) at which each change is identifiable."""
        return [{k for k, v in enumerate(self.population_xi_norms(j)) if v > 1e-10} for j in range(self.q)]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "scenario": self.scenario,
            "thetas": list(self.thetas),
            "modes": [sorted(k + 1 for k in ks) for ks in self.modes],
            "omega": [size_of_change(self, j)[1] for j in range(self.q)],
            "base_loadings": [L.tolist() for L in self.base_loadings],
            "transforms": [[A.tolist() for A in seg] for seg in self.transforms],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            T=int(d["T"]),
            thetas=[int(t) for t in d["thetas"]],
            base_loadings=[np.asarray(L, dtype=float) for L in d["base_loadings"]],
            transforms=[[np.asarray(A, dtype=float) for A in seg] for seg in d["transforms"]],
            scenario=d.get("scenario", "custom"),
            meta=d.get("meta", {}),
        )


def size_of_change(gt: GroundTruth, j: int) -> tuple[np.ndarray, float]:
    """Per-mode Frobenius norms of the covariance change at change ``j`` (0-based) and their root sum of squares."""
    if not 0 <= j < gt.q:
        raise InvalidInputError(f"change index {j} out of range for q={gt.q}")
    per_mode = np.array(
        [np.linalg.norm(gt.population_covariance(j + 1, k) - gt.population_covariance(j, k)) for k in range(gt.K)]
    )
    return per_mode, float(math.sqrt(float(np.sum(per_mode ** 2))))


def _change_matrices(sc: SimScenario, rng: np.random.Generator) -> list[dict[int, np.ndarray]]:
    """Per change point, the mode -> transformation applied at that point."""
    if sc.scenario == "S0":
        return []
    if sc.scenario == "S3":
        return [{0: np.diag([1.0, 1.0, 0.0])}]
    a1 = rng.standard_normal(3)
    a3 = rng.standard_normal((3, 3)) * math.sqrt(1.0 / 3.0)
    A11 = np.array([[0.5, 0.0, 0.0], [a1[0], 1.0, 0.0], [a1[1], a1[2], 1.5]])
    A22 = np.diag([1.0, 1.0, 0.0])
    changes = [{0: A11}, {1: A22}, {2: a3}]
    if sc.scenario == "S2":
        changes[0][2] = 3.0 * np.eye(3)
        changes[2][1] = np.diag([1.0, 0.6, 0.2])
    return changes


def missing_mask(T: int, dims: Sequence[int]) -> np.ndarray:
    """Observed-entry mask: the block ``t > T/2`` and ``i_k > p_k/2`` for all ``k`` is missing."""
    mask = np.ones((T,) + tuple(dims), dtype=bool)
    block = (slice(T // 2, None),) + tuple(slice(p // 2, None) for p in dims)
    mask[block] = False
    return mask


def generate(sc: SimScenario, return_components: bool = False):
    """Draw one realization; returns ``(series, truth)`` (plus components on request).

    Draw order within a replication: transformation entries, base loadings,
    factor innovations (stationary start, ``BURN_IN`` steps), noise.
    """
    rng = rng_for(sc.seed, sc.replication)
    K = len(sc.dims)
    changes = _change_matrices(sc, rng)
    base = [rng.uniform(-1.0, 1.0, size=(p, r)) for p, r in zip(sc.dims, sc.ranks)]

    transforms = [[np.eye(r) for r in sc.ranks]]
    for ch in changes:
        cur = [A.copy() for A in transforms[-1]]
        for k, M in ch.items():
            cur[k] = cur[k] @ M
        transforms.append(cur)

    rho = float(sc.rho_f)
    n_total = BURN_IN + sc.T
    innov = rng.standard_normal((n_total,) + sc.ranks)
    F = np.empty_like(innov)
    F[0] = innov[0]
    if rho != 0.0:
        s = math.sqrt(1.0 - rho * rho)
        for t in range(1, n_total):
            F[t] = rho * F[t - 1] + s * innov[t]
    else:
        F[1:] = innov[1:]
    F = F[BURN_IN:]

    data = rng.standard_normal((sc.T,) + sc.dims)
    noise = data.copy() if return_components else None
    common = np.empty_like(data) if return_components else None
    bps = [0, *sc.thetas, sc.T]
    for j in range(len(bps) - 1):
        z = F[bps[j]:bps[j + 1]]
        for k in range(K):
            z = mode_product(z, base[k] @ transforms[j][k], k + 1)
        data[bps[j]:bps[j + 1]] += z
        if common is not None:
            common[bps[j]:bps[j + 1]] = z
    mask = None
    if sc.missing:
        mask = missing_mask(sc.T, sc.dims)
        data[~mask] = np.nan
    truth = GroundTruth(
        sc.T,
        list(sc.thetas),
        base,
        transforms,
        sc.scenario,
        meta={"dims": list(sc.dims), "ranks": list(sc.ranks), "rho_f": rho, "spacing": sc.spacing,
              "seed": sc.seed, "replication": sc.replication},
    )
    series = TensorSeries(data, mask)
    if return_components:
        return series, truth, {"factors": F, "common": common, "noise": noise}
    return series, truth


# --------------------------------------------------------------------- metrics


@dataclass
class DetectionMetrics:
    accuracy: list[int]
    q_diff: int
    all_detected: bool


def evaluate_detection(thetas_hat: Sequence[int], thetas: Sequence[int], T: int) -> DetectionMetrics:
    """Per-change accuracy within ``2 log T``, ``q_hat - q``, and membership of the all-detected set."""
    est = sorted(int(t) for t in thetas_hat)
    true = sorted(int(t) for t in thetas)
    tol = 2.0 * math.log(T)
    acc = [int(any(abs(e - th) <= tol for e in est)) for th in true]
    ok = len(est) == len(true)
    if ok:
        bounds = [0, *true, T]
        for j, e in enumerate(est, start=1):
            lo = (bounds[j - 1] + bounds[j]) / 2.0
            hi = (bounds[j] + bounds[j + 1]) / 2.0
            if not lo < e <= hi:
                ok = False
                break
    return DetectionMetrics(acc, len(est) - len(true), ok)


def evaluate_mode_id(est_sets: Sequence[set[int]], true_sets: Sequence[set[int]], K: int) -> tuple[list[float], list[float]]:
    """Per-change true and false positive rates for one replication."""
    tpr, fpr = [], []
    for est, true in zip(est_sets, true_sets):
        est, true = set(est), set(true)
        tpr.append(len(est & true) / max(len(true), 1))
        fpr.append(len(est - true) / max(K - len(true), 1))
    return tpr, fpr


def aggregate_mode_id(per_rep: Sequence[tuple[list[float], list[float]]]) -> tuple[list[float], list[float]]:
    """Average per-replication rates (callers pass only replications in the all-detected set)."""
    if not per_rep:
        return [], []
    tpr = np.mean([r[0] for r in per_rep], axis=0)
    fpr = np.mean([r[1] for r in per_rep], axis=0)
    return tpr.tolist(), fpr.tolist()
