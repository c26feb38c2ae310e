import math

import numpy as np
import pytest

from tfmseg.errors import InvalidInputError
from tfmseg.montecarlo import run_replications
from tfmseg.simgen import (
    GroundTruth,
    SimScenario,
    aggregate_mode_id,
    evaluate_detection,
    evaluate_mode_id,
    generate,
    missing_mask,
    size_of_change,
)
from tfmseg.tensor import unfold


def test_same_scenario_same_bits():
    sc = SimScenario("S1", 100, (5, 6, 7), rho_f=0.7, seed=3, replication=2)
    a, ta = generate(sc)
    b, tb = generate(sc)
    assert a.data.tobytes() == b.data.tobytes()
    for x, y in zip(ta.transforms[1], tb.transforms[1]):
        assert np.array_equal(x, y)
    c, _ = generate(sc.with_replication(3))
    assert not np.array_equal(a.data, c.data)


@pytest.mark.parametrize("rho", [0.0, 0.7])
def test_factor_marginal_variance(rho):
    T = 4000
    _, _, comp = generate(SimScenario("S0", T, (4, 4, 4), (2, 2, 2), rho_f=rho, seed=1), return_components=True)
    var = comp["factors"].reshape(T, -1).var(axis=0)
    # the AR(1) inflates the sampling error of a variance by about (1 + rho^2) / (1 - rho^2)
    tol = 3 * math.sqrt(2 / T) * math.sqrt((1 + rho ** 2) / (1 - rho ** 2)) * 1.5
    assert np.all(np.abs(var - 1) < tol)
    if rho:
        F = comp["factors"].reshape(T, -1)
        lag1 = np.mean([np.corrcoef(F[1:, i], F[:-1, i])[0, 1] for i in range(F.shape[1])])
        assert lag1 == pytest.approx(rho, abs=0.05)


def test_common_component_matches_segment_structure():
    sc = SimScenario("S2", 120, (4, 5, 6), seed=7)
    s, gt, comp = generate(sc, return_components=True)
    np.testing.assert_allclose(comp["common"] + comp["noise"], s.data, atol=1e-12)
    bps = [0, *gt.thetas, gt.T]
    for j in range(len(bps) - 1):
        for t in (bps[j], bps[j + 1] - 1):
            L = [gt.loading(j, k) for k in range(3)]
            expect = np.einsum("abc,ia,jb,kc->ijk", comp["factors"][t], *L)
            np.testing.assert_allclose(comp["common"][t], expect, atol=1e-10)


def test_scenario_change_points_and_modes():
    assert SimScenario("S1", 400).thetas == (100, 200, 300)
    assert SimScenario("S1", 400, spacing="unequal").thetas == (100, 200, 250)
    assert SimScenario("S3", 400).thetas == (200,)
    _, g0 = generate(SimScenario("S0", 50, (4, 4, 4), seed=0))
    assert g0.q == 0 and all(np.array_equal(A, np.eye(3)) for A in g0.transforms[0])
    _, g1 = generate(SimScenario("S1", 50, (4, 4, 4), seed=0))
    assert g1.modes == [{0}, {1}, {2}]
    _, g2 = generate(SimScenario("S2", 50, (4, 4, 4), seed=0))
    assert g2.modes == [{0}, {1}, {1, 2}]
    _, g3 = generate(SimScenario("S3", 50, (4, 4, 4), seed=0))
    assert g3.modes == [{0}]


def test_scenario_validation():
    with pytest.raises(InvalidInputError):
        SimScenario("S9")
    with pytest.raises(InvalidInputError):
        SimScenario("S1", dims=(4, 4), ranks=(3, 3))
    with pytest.raises(InvalidInputError):
        SimScenario("S0", rho_f=1.0)
    with pytest.raises(InvalidInputError):
        SimScenario("S0", T=5)


def test_size_of_change_toy():
    gt = GroundTruth(10, [5], [np.eye(2)], [[np.eye(2)], [2 * np.eye(2)]])
    per_mode, omega = size_of_change(gt, 0)
    assert omega == pytest.approx(3 * math.sqrt(2))
    np.testing.assert_allclose(per_mode, [3 * math.sqrt(2)])
    same = GroundTruth(10, [5], [np.eye(2)], [[np.eye(2)], [np.eye(2)]])
    assert size_of_change(same, 0)[1] == 0.0
    with pytest.raises(InvalidInputError):
        size_of_change(gt, 1)


def test_size_of_change_matches_long_simulation():
    T = 60000
    s, gt, comp = generate(SimScenario("S1", T, (4, 4, 4), seed=5), return_components=True)
    F = comp["factors"]
    bps = [0, *gt.thetas, T]

    def seg_cov(j, k):
        G = F[bps[j]:bps[j + 1]]
        for l in range(3):
            G = np.moveaxis(np.tensordot(G, gt.transforms[j][l], axes=([l + 1], [0])), -1, l + 1)
        mats = [unfold(g, k) for g in G]
        return sum(m @ m.T for m in mats) / len(mats)

    for j in range(3):
        per_mode, _ = size_of_change(gt, j)
        for k in range(3):
            mc = np.linalg.norm(seg_cov(j + 1, k) - seg_cov(j, k))
            assert mc == pytest.approx(per_mode[k], rel=0.15, abs=0.3)


def test_missing_mask_block():
    m = missing_mask(10, (4, 5))
    assert m.sum() == m.size - 5 * 2 * 3
    assert not m[5, 2, 2] and m[4, 3, 3] and m[9, 1, 4]
    s, _ = generate(SimScenario("S0", 10, (4, 4, 4), seed=0, missing=True))
    assert s.has_missing and np.isnan(s.data[~s.mask]).all() and np.isfinite(s.data[s.mask]).all()


def test_evaluate_detection_examples():
    m = evaluate_detection([100, 200, 300], [100, 200, 300], 400)
    assert (m.accuracy, m.q_diff, m.all_detected) == ([1, 1, 1], 0, True)
    m = evaluate_detection([], [100, 200, 300], 400)
    assert (m.accuracy, m.q_diff, m.all_detected) == ([0, 0, 0], -3, False)
    off = math.floor(2 * math.log(400))
    assert evaluate_detection([200 + off], [200], 400).accuracy == [1]
    assert evaluate_detection([200 - off - 1], [200], 400).accuracy == [0]
    # right number but one estimate outside its midpoint window
    assert not evaluate_detection([100, 260, 270], [100, 200, 300], 400).all_detected


def test_evaluate_mode_id_examples():
    assert evaluate_mode_id([{0}], [{0}], 3) == ([1.0], [0.0])
    assert evaluate_mode_id([{1}], [{0}], 3) == ([0.0], [0.5])
    assert evaluate_mode_id([set()], [set()], 3) == ([0.0], [0.0])
    assert aggregate_mode_id([([1.0], [0.0]), ([0.0], [0.5])]) == ([0.5], [0.25])
    assert aggregate_mode_id([]) == ([], [])


def test_truth_round_trip():
    _, gt = generate(SimScenario("S2", 60, (4, 4, 4), seed=1))
    back = GroundTruth.from_dict(gt.to_dict())
    assert back.thetas == gt.thetas and back.modes == gt.modes
    for j in range(gt.q + 1):
        for k in range(3):
            assert np.array_equal(back.loading(j, k), gt.loading(j, k))


def _square(x):
    return x * x


def test_run_replications_keeps_order():
    items = list(range(7))
    assert run_replications(_square, items, workers=1) == [x * x for x in items]
    assert run_replications(_square, items, workers=2) == [x * x for x in items]
