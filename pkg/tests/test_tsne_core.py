import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from riskmap.tsne_core import (
    FLOOR,
    TsneConfig,
    TsneDivergenceError,
    calibrate_sigma,
    gradient,
    joint_affinities,
    kl_cost,
    low_dim_affinities,
    pairwise_sq_dists,
    run_tsne,
)

import oracles


def test_sq_dists_345():
    d = pairwise_sq_dists(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert d[0, 1] == d[1, 0] == 25.0
    assert d[0, 0] == d[1, 1] == 0.0


def test_sq_dists_identical():
    assert not pairwise_sq_dists(np.ones((4, 3))).any()


def test_sq_dists_match_double_loop(rng):
    x = rng.normal(size=(5, 3))
    d = pairwise_sq_dists(x)
    assert np.allclose(d, oracles.sq_dists(x), rtol=0, atol=1e-12)
    assert np.array_equal(d, d.T)


def test_sq_dists_reject_nonfinite():
    with pytest.raises(ValueError):
        pairwise_sq_dists(np.array([[0.0, np.nan], [1.0, 1.0]]))


def test_equidistant_row_is_uniform():
    cal = calibrate_sigma(np.array([1.0, 1.0]), 2.0)
    assert np.array_equal(cal.probs, [0.5, 0.5])
    assert cal.perplexity == 2.0
    assert cal.converged


def test_max_entropy_row():
    n = 7
    cal = calibrate_sigma(np.full(n - 1, 3.0), n - 1)
    assert np.allclose(cal.probs, 1 / (n - 1))
    assert cal.perplexity == pytest.approx(n - 1)


# grid-scan oracle: 10^4 sigmas on [0.001, 10], linear interpolation of the entropy crossing
SIGMA_PERP3 = [1.7082140157900738, 1.1868045510211491, 0.9095936977872893, 1.1868045510211491, 1.7082140157900736]
SIGMA_PERP2_END = 1.1385481764824539
# interior rows at perplexity 2 already sit at 1 bit as sigma -> 0; any sigma below
# the crossing of H = 1 + 1e-5 is a valid answer
SIGMA_PERP2_INTERIOR_MAX = [0.32865086050592685, 0.3202112052471786, 0.32865086050592685]


def _grid_sigma(d, perplexity):
    sig = np.linspace(0.001, 10, 10**4)
    w = np.exp(-d[None, :] / (2 * sig[:, None] ** 2))
    with np.errstate(invalid="ignore"):
        p = w / w.sum(axis=1, keepdims=True)
    h = -(p * np.log2(np.where(p > 0, p, 1))).sum(axis=1)
    target = math.log2(perplexity)
    j = int(np.argmax(h >= target))
    return sig[j - 1] + (target - h[j - 1]) * (sig[j] - sig[j - 1]) / (h[j] - h[j - 1])


def test_collinear_sigmas_match_grid_scan():
    x = np.arange(5.0)
    for i in range(5):
        d = np.delete((x - x[i]) ** 2, i)
        cal = calibrate_sigma(d, 3.0)
        assert cal.converged
        assert cal.sigma == pytest.approx(SIGMA_PERP3[i], abs=1e-3)
        assert cal.sigma == pytest.approx(_grid_sigma(d, 3.0), abs=1e-3)


def test_collinear_perplexity_two():
    x = np.arange(5.0)
    for i in range(5):
        d = np.delete((x - x[i]) ** 2, i)
        cal = calibrate_sigma(d, 2.0)
        assert cal.converged
        assert abs(cal.entropy_bits - 1.0) <= 1e-5
        if i in (0, 4):
            assert cal.sigma == pytest.approx(SIGMA_PERP2_END, abs=1e-3)
        else:
            assert 0 < cal.sigma <= SIGMA_PERP2_INTERIOR_MAX[i - 1] + 1e-3


def test_unattainable_perplexity_is_flagged():
    # nearest neighbours tie in threes, so entropy cannot drop below log2(3)
    cal = calibrate_sigma(np.array([1.0, 1.0, 1.0, 4.0, 9.0]), 2.0)
    assert not cal.converged
    assert cal.entropy_bits == pytest.approx(math.log2(3), abs=1e-6)
    assert cal.probs.sum() == pytest.approx(1.0)


def test_calibrate_needs_positive_distance():
    with pytest.raises(ValueError):
        calibrate_sigma(np.zeros(3), 2.0)


def test_two_point_joint():
    aff = joint_affinities(np.array([[0.0, 0.0], [1.0, 2.0]]), 1.0)
    assert aff.p[0, 1] == aff.p[1, 0] == 0.5


def test_equidistant_joint():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    aff = joint_affinities(tri, 2.0)
    off = aff.p[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 1 / 6, atol=1e-12)


def test_joint_normalized_and_symmetric(rng):
    aff = joint_affinities(rng.normal(size=(10, 4)), 3.0)
    assert np.array_equal(aff.p, aff.p.T)
    assert abs(aff.p.sum() - 1) <= 1e-10
    assert np.all(np.diag(aff.p) == 0)
    assert aff.p[~np.eye(10, dtype=bool)].min() >= FLOOR


def test_joint_perplexity_must_be_below_n(rng):
    with pytest.raises(ValueError, match="perplexity must be < n"):
        joint_affinities(rng.normal(size=(5, 2)), 5.0)


def test_q_two_points():
    q = low_dim_affinities(np.array([[3.0, -1.0], [10.0, 7.0]])).p
    assert q[0, 1] == q[1, 0] == 0.5


def test_q_equilateral():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    q = low_dim_affinities(tri).p
    assert np.allclose(q[~np.eye(3, dtype=bool)], 1 / 6, atol=1e-12)


def test_q_matches_naive(rng):
    y = rng.normal(size=(8, 2))
    q = low_dim_affinities(y).p
    assert np.allclose(q, oracles.student_q(y.tolist()), rtol=0, atol=1e-12)


def test_kl_identity(rng):
    q = low_dim_affinities(rng.normal(size=(6, 2))).p
    assert abs(kl_cost(q, q)) <= 1e-12
    pair = np.array([[0, 0.5], [0.5, 0]])
    assert kl_cost(pair, pair) == 0.0


def test_kl_hand_sum():
    p = np.array([[0, 0.45, 0.04], [0.45, 0, 0.01], [0.04, 0.01, 0]])
    q = np.full((3, 3), 1 / 6)
    np.fill_diagonal(q, 0)
    expected = 2 * (0.45 * math.log(0.45 * 6) + 0.04 * math.log(0.04 * 6) + 0.01 * math.log(0.01 * 6))
    assert kl_cost(p, q) == pytest.approx(expected, abs=1e-10)
    assert kl_cost(p, q) == pytest.approx(0.7234890729228428, abs=1e-10)


def test_gradient_zero_at_p_equals_q(rng):
    y = rng.normal(size=(6, 2))
    q = low_dim_affinities(y).p
    assert np.allclose(gradient(q, q, y), 0, atol=1e-10)


def test_gradient_two_points_opposite():
    y = np.array([[0.0, 0.0], [1.0, 1.0]])
    p = np.array([[0, 0.5], [0.5, 0]])
    q = np.array([[0, 0.4], [0.4, 0]])
    g = gradient(p, q, y)
    assert np.array_equal(g[0], -g[1])


def test_gradient_matches_finite_differences(rng):
    x = rng.normal(size=(10, 5))
    p = joint_affinities(x, 3.0).p
    y = rng.normal(size=(10, 2))
    g = gradient(p, low_dim_affinities(y).p, y)
    fd = oracles.kl_finite_diff(p, y)
    rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)
    assert rel.max() < 1e-4


coords = arrays(np.float64, (6, 2), elements=st.floats(-20, 20))


@settings(max_examples=30, deadline=None)
@given(coords, st.tuples(st.floats(-100, 100), st.floats(-100, 100)))
def test_translation_invariance(y, shift):
    rng = np.random.default_rng(0)
    p = joint_affinities(rng.normal(size=(6, 3)), 2.0).p
    y2 = y + np.array(shift)
    q1, q2 = low_dim_affinities(y).p, low_dim_affinities(y2).p
    assert abs(kl_cost(p, q1) - kl_cost(p, q2)) <= 1e-10 * max(1.0, kl_cost(p, q1))
    assert np.allclose(gradient(p, q1, y), gradient(p, q2, y2), rtol=1e-6, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(coords, coords)
def test_kl_nonnegative(y1, y2):
    p = low_dim_affinities(y1).p
    assert kl_cost(p, low_dim_affinities(y2).p) >= -1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        TsneConfig(perplexity=0)
    with pytest.raises(ValueError):
        TsneConfig(exaggeration_iters=300, max_iters=200)
    with pytest.raises(ValueError):
        TsneConfig(exaggeration_factor=0.5)


def test_two_point_run_stays_put():
    x = np.array([[0.0, 0.0], [5.0, 1.0]])
    init = np.random.default_rng(3).normal(0.0, 1e-4, size=(2, 2))
    still = TsneConfig(perplexity=1.0, max_iters=100, exaggeration_factor=1.0, seed=3, exaggeration_iters=50)
    emb = run_tsne(x, still)
    assert np.allclose(emb.coords, init, atol=1e-12)
    assert all(abs(kl) < 1e-12 for _, kl in emb.cost_trace)
    # with exaggeration 12 P != Q, so the pair moves; Q stays at 1/2 and KL at 0
    emb = run_tsne(x, TsneConfig(perplexity=1.0, seed=3))
    assert np.all(np.isfinite(emb.coords))
    assert all(abs(kl) < 1e-12 for _, kl in emb.cost_trace)


def test_trace_every_50_and_last(rng):
    cfg = TsneConfig(perplexity=3, max_iters=120, exaggeration_iters=40, momentum_switch_iter=40)
    emb = run_tsne(rng.normal(size=(12, 3)), cfg)
    assert [it for it, _ in emb.cost_trace] == [0, 50, 100, 120]
    assert all(kl >= 0 for _, kl in emb.cost_trace)
    assert emb.final_kl == emb.cost_trace[-1][1]


def test_run_is_bitwise_reproducible(rng):
    x = rng.normal(size=(15, 4))
    cfg = TsneConfig(perplexity=4, max_iters=200, seed=11, exaggeration_iters=100, momentum_switch_iter=100)
    a, b = run_tsne(x, cfg), run_tsne(x, cfg)
    assert np.array_equal(a.coords, b.coords)
    assert a.cost_trace == b.cost_trace


def test_divergence_raises(rng):
    cfg = TsneConfig(perplexity=3, learning_rate=1e300, max_iters=50, exaggeration_iters=10)
    with pytest.raises(TsneDivergenceError, match="learning rate"):
        run_tsne(rng.normal(size=(10, 3)), cfg)


def test_run_reduces_kl(province_features):
    fm, _ = province_features
    emb = run_tsne(fm, TsneConfig(perplexity=5, seed=1))
    assert emb.final_kl < emb.kl_at(0)
    assert emb.final_kl < emb.kl_at(250)
    assert emb.coords.shape == (31, 2)
    assert emb.region_ids == fm.region_ids
