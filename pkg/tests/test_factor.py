import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfmseg.errors import DimensionMismatchError, InvalidInputError, UnsupportedMissingError
from tfmseg.factor import (
    TensorSeries,
    estimate_loadings,
    estimate_pseudo_factors,
    estimate_ranks,
    mode_covariance,
    pseudo_factor_stats,
    rank_from_eigenvalues,
    top_eigenvectors,
)
from tfmseg.modeid import loading_distance
from tfmseg.simgen import SimScenario, generate
from tfmseg.tensor import unfold, vech


def test_mode_covariance_identity_observation():
    s = TensorSeries(np.eye(2)[None])
    np.testing.assert_allclose(mode_covariance(s, 0), 0.25 * np.eye(2))


def test_mode_covariance_zero_and_bruteforce():
    assert not mode_covariance(TensorSeries(np.zeros((3, 2, 3))), 1).any()
    rng = np.random.default_rng(0)
    x = rng.standard_normal((7, 3, 4, 2))
    s = TensorSeries(x)
    p = 24
    for k in range(3):
        for a, b in ((0, 7), (2, 5)):
            expect = np.zeros((x.shape[k + 1],) * 2)
            for t in range(a, b):
                m = unfold(x[t], k)
                for i in range(m.shape[0]):
                    for j in range(m.shape[0]):
                        expect[i, j] += m[i] @ m[j]
            expect /= (b - a) * p
            got = mode_covariance(s, k, a, b)
            np.testing.assert_allclose(got, expect, atol=1e-12)
            assert np.linalg.eigvalsh(got).min() > -1e-12


def test_mode_covariance_errors():
    x = np.ones((4, 2, 2))
    mask = np.ones_like(x, dtype=bool)
    mask[3, 1, 1] = False
    with pytest.raises(UnsupportedMissingError):
        mode_covariance(TensorSeries(x, mask), 0)
    with pytest.raises(InvalidInputError):
        mode_covariance(TensorSeries(x), 0, 2, 2)


def test_fully_true_mask_is_complete():
    x = np.ones((4, 2, 2))
    s = TensorSeries(x, np.ones_like(x, dtype=bool))
    s.require_complete()
    np.testing.assert_allclose(mode_covariance(s, 0), np.full((2, 2), 0.5))


def test_rank_from_eigenvalues_examples():
    assert rank_from_eigenvalues([8, 4, 0.5, 0.25], 2) == 2
    assert rank_from_eigenvalues([100] + [1] * 6, 3) == 1
    # an exact zero wins at the first occurrence
    assert rank_from_eigenvalues([5, 4, 0.0, 0.0], 3) == 2
    with pytest.raises(InvalidInputError):
        rank_from_eigenvalues([3, 2], 2)


def test_top_eigenvectors_sign_convention():
    m = np.diag([1.0, 3.0, 2.0])
    vals, vecs = top_eigenvectors(m, 2)
    np.testing.assert_allclose(vals, [3, 2, 1])
    np.testing.assert_allclose(vecs, [[0, 0], [1, 0], [0, 1]], atol=1e-14)
    vals, vecs = top_eigenvectors(-np.eye(2) + 2, 1)  # eigvec (1,1)/sqrt2, tie on magnitude
    assert vecs[0, 0] > 0


def test_rank_one_noiseless_loading_recovered():
    rng = np.random.default_rng(1)
    lam = rng.standard_normal(6)
    lam /= np.linalg.norm(lam)
    f = rng.standard_normal(50)
    s = TensorSeries(f[:, None] * lam[None, :])
    L = estimate_loadings(s, (1,))
    assert loading_distance(L.loadings[0], lam[:, None]) < 1e-10
    np.testing.assert_allclose(L.loadings[0].T @ L.loadings[0], [[6.0]])


def test_loading_scaling_and_rotation_invariance():
    sc = SimScenario("S0", 200, (8, 9, 10), (2, 2, 2), seed=5)
    s, gt = generate(sc)
    L = estimate_loadings(s, (2, 2, 2))
    for k, Lk in enumerate(L.loadings):
        np.testing.assert_allclose(Lk.T @ Lk, s.dims[k] * np.eye(2), atol=1e-9)
    # rotate mode 2 of the data by an orthogonal Q: loading space rotates with it
    Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((9, 9)))
    rotated = TensorSeries(np.einsum("ij,tajb->taib", Q, s.data))
    L2 = estimate_loadings(rotated, (2, 2, 2))
    assert loading_distance(L2.loadings[1], Q @ L.loadings[1]) < 1e-8
    assert loading_distance(L2.loadings[0], L.loadings[0]) < 1e-8


def test_estimate_loadings_deterministic():
    s, _ = generate(SimScenario("S1", 120, (6, 6, 6), seed=9))
    a = estimate_loadings(s, (3, 3, 3))
    b = estimate_loadings(s, (3, 3, 3))
    for x, y in zip(a.loadings, b.loadings):
        assert np.array_equal(x, y)


def test_estimate_loadings_errors():
    s = TensorSeries(np.ones((5, 3, 3)))
    with pytest.raises(InvalidInputError):
        estimate_loadings(s, (4, 1))
    with pytest.raises(DimensionMismatchError):
        estimate_loadings(s, (1,))


def test_loading_error_shrinks_with_other_modes():
    med = []
    for p3 in (4, 16):  # p_{-1} = 100 -> 400 with p_1 fixed
        d = []
        for rep in range(10):
            sc = SimScenario("S0", 400, (10, 10, p3), (3, 3, 3), seed=11, replication=rep)
            s, gt = generate(sc)
            d.append(loading_distance(estimate_loadings(s, (3, 3, 3)).loadings[0], gt.loading(0, 0)))
        med.append(np.median(d))
    assert med[1] <= med[0]


def test_rank_estimation_s1():
    hits = 0
    for rep in range(10):
        s, _ = generate(SimScenario("S1", 1600, (20, 20, 20), seed=2, replication=rep))
        hits += estimate_ranks(s) == (3, 3, 3)
    assert hits >= 9


def test_estimate_ranks_requires_large_modes():
    with pytest.raises(InvalidInputError):
        estimate_ranks(TensorSeries(np.ones((5, 3, 6))))


def test_pseudo_factors_recover_core_with_orthogonal_loadings():
    rng = np.random.default_rng(3)
    dims, ranks = (6, 5, 4), (2, 3, 2)
    L = [np.sqrt(p) * np.linalg.qr(rng.standard_normal((p, r)))[0] for p, r in zip(dims, ranks)]
    G = rng.standard_normal((7,) + ranks)
    X = np.einsum("tabc,ia,jb,kc->tijk", G, *L)
    np.testing.assert_allclose(estimate_pseudo_factors(TensorSeries(X), L), G, atol=1e-12)
    assert not estimate_pseudo_factors(TensorSeries(np.zeros((2,) + dims)), L).any()


def test_pseudo_factors_bruteforce():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((3, 4, 3))
    L = [rng.standard_normal((4, 2)), rng.standard_normal((3, 2))]
    got = estimate_pseudo_factors(TensorSeries(X), L)
    for t in range(3):
        expect = np.zeros((2, 2))
        for a in range(2):
            for b in range(2):
                for i in range(4):
                    for j in range(3):
                        expect[a, b] += X[t, i, j] * L[0][i, a] * L[1][j, b]
        np.testing.assert_allclose(got[t], expect / 12, atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        estimate_pseudo_factors(TensorSeries(X), [L[1], L[0]])


def test_pseudo_factor_stats_scalar_example():
    st_ = pseudo_factor_stats(np.array([1.0, 1.0, 2.0])[:, None])
    np.testing.assert_array_equal(st_.V[:, 0], [1, 1, 4])
    np.testing.assert_array_equal(st_.S[1:, 0], [1, 2, 6])
    assert st_.mode_covariance(0, 0, 3)[0, 0] == 2.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ranks=st.lists(st.integers(1, 3), min_size=1, max_size=3))
def test_prefix_means_match_direct_sums(seed, ranks):
    rng = np.random.default_rng(seed)
    T = 12
    G = rng.standard_normal((T,) + tuple(ranks))
    stats = pseudo_factor_stats(G)
    assert stats.d == sum(r * (r + 1) // 2 for r in ranks)
    for a, b in ((0, T), (3, 7), (5, 6)):
        for k in range(len(ranks)):
            direct = sum(unfold(G[t], k) @ unfold(G[t], k).T for t in range(a, b)) / (b - a)
            got = stats.mode_covariance(k, a, b)
            np.testing.assert_allclose(got, direct, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(stats.interval_mean(a, b)[stats.block(k)], vech(direct), rtol=1e-10, atol=1e-12)
            assert np.linalg.eigvalsh(got).min() > -1e-10
