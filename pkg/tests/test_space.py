import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homtype.space import (SpaceError, ball_measure, ball_measures, build_space,
                           estimate_doubling, grid_space, kernel_P, line_space, lp_norm,
                           maximal_function, mutual_volume, mutual_volume_matrix,
                           quasi_triangle_constant, random_cloud)


def brute_a0(d):
    n = d.shape[0]
    best = 1.0
    for x, y, z in itertools.permutations(range(n), 3):
        best = max(best, d[x, z] / (d[x, y] + d[y, z]))
    return best


def test_two_point_space():
    sp = build_space(coords=[0.0, 1.0])
    assert sp.a0 == 1.0
    assert sp.diam == 1.0
    assert sp.total_mass == 2.0


def test_snowflake_three_points_matches_brute_force():
    sp = build_space(coords=[0.0, 1.0, 2.0], metric="snowflake", theta=0.5)
    d = sp.dist
    assert d[0, 2] == pytest.approx(math.sqrt(2))
    # a snowflake of a metric is a metric, so the exact constant is 1
    assert sp.a0 == pytest.approx(brute_a0(d))
    assert sp.a0 == 1.0


def test_a0_of_squared_distance():
    # d = |x - y|^2 on {0, 1, 2}: d(0,2) = 4 = 2 (d(0,1) + d(1,2))
    x = np.array([0.0, 1.0, 2.0])
    d = (x[:, None] - x[None, :]) ** 2
    sp = build_space(dist=d, metric="matrix")
    assert sp.a0 == 2.0


def test_a0_min_plus_matches_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.uniform(size=(9, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1)) ** 1.7
    assert quasi_triangle_constant(d) == pytest.approx(brute_a0(d), rel=1e-12)


@pytest.mark.parametrize("bad, msg", [
    (np.array([[0.0, 1.0], [2.0, 0.0]]), "not symmetric"),
    (np.array([[0.0, 0.0], [0.0, 0.0]]), "zero or negative"),
    (np.array([[1.0, 1.0], [1.0, 0.0]]), "diagonal"),
    (np.array([[0.0]]), "at least 2"),
])
def test_matrix_rejections(bad, msg):
    with pytest.raises(SpaceError, match=msg):
        build_space(dist=bad, metric="matrix")


def test_small_asymmetry_is_symmetrized():
    d = np.array([[0.0, 1.0], [1.0 + 1e-9, 0.0]])
    sp = build_space(dist=d, metric="matrix")
    assert sp.dist[0, 1] == sp.dist[1, 0]
    with pytest.raises(SpaceError):
        build_space(dist=np.array([[0.0, 1.0], [1.0 + 1e-7, 0.0]]), metric="matrix")


def test_duplicate_points_rejected():
    with pytest.raises(SpaceError):
        build_space(coords=[0.0, 0.0, 1.0])


def test_weights_validated():
    with pytest.raises(SpaceError, match="positive"):
        build_space(coords=[0.0, 1.0], weights=[1.0, -1.0])
    with pytest.raises(SpaceError, match="weights"):
        build_space(coords=[0.0, 1.0], weights=[1.0])


def test_snowflake_exponent_range():
    with pytest.raises(SpaceError):
        build_space(coords=[0.0, 1.0], metric="snowflake", theta=1.5)


def test_a0_hint():
    with pytest.raises(SpaceError, match="hint"):
        x = np.array([0.0, 1.0, 2.0])
        build_space(dist=(x[:, None] - x) ** 2, metric="matrix", a0_hint=1.5)


def test_open_balls():
    sp = build_space(coords=[0.0, 1.0])
    assert ball_measure(sp, 0, 1.0) == 1.0
    assert ball_measure(sp, 0, 1.5) == 2.0
    line8 = line_space(8)
    assert ball_measure(line8, 3, 2.5) == 5.0
    np.testing.assert_array_equal(ball_measures(line8, 2.5), [3, 4, 5, 5, 5, 5, 4, 3])
    with pytest.raises(ValueError):
        ball_measure(sp, 0, 0.0)


def test_mutual_volume():
    sp = build_space(coords=[0.0, 1.0])
    assert mutual_volume(sp, 0, 0) == 0.0
    assert mutual_volume(sp, 0, 1) == 1.0
    line8 = line_space(8)
    assert mutual_volume(line8, 3, 4) == 1.0
    m = mutual_volume_matrix(line8)
    ref = np.array([[mutual_volume(line8, i, j) for j in range(8)] for i in range(8)])
    np.testing.assert_array_equal(m, ref)


def test_mutual_volume_matrix_weighted_cloud():
    sp = build_space(coords=np.random.default_rng(0).uniform(size=(20, 2)),
                     weights=np.arange(1, 21.0))
    m = mutual_volume_matrix(sp)
    ref = np.array([[mutual_volume(sp, i, j) for j in range(20)] for i in range(20)])
    np.testing.assert_allclose(m, ref, rtol=0, atol=1e-12)


def test_kernel_P_values():
    sp = build_space(coords=[0.0, 1.0])
    for eps in (0.0, 0.5, 3.0):
        assert kernel_P(sp, eps, 0, 1, 1.0) == pytest.approx(2.0 ** -(1 + eps))
    line8 = line_space(8)
    assert kernel_P(line8, 1.0, 0, 0, 2.5) == pytest.approx(1 / ball_measure(line8, 0, 2.5))
    # V_1(0) = 1, V(0, 2) = |{0, 1}| = 2, r / (r + d) = 1/3
    assert kernel_P(line8, 1.0, 0, 2, 1.0) == pytest.approx(1 / 9)
    # V_1(3) = 1, V(3, 5) = |{2, 3, 4}| = 3
    assert kernel_P(line8, 1.0, 3, 5, 1.0) == pytest.approx(1 / 12)
    with pytest.raises(ValueError):
        kernel_P(line8, 1.0, 0, 1, 0.0)


def test_kernel_P_vectorized():
    sp = random_cloud(15, seed=2)
    x, y = np.meshgrid(np.arange(15), np.arange(15), indexing="ij")
    mat = kernel_P(sp, 0.7, x, y, 1.3)
    for i, j in [(0, 0), (1, 7), (14, 3)]:
        assert mat[i, j] == kernel_P(sp, 0.7, i, j, 1.3)


def test_lp_norm():
    sp = build_space(coords=[0.0, 1.0, 3.0], weights=[1.0, 2.0, 0.5])
    f = np.array([1.0, -2.0, 4.0])
    assert lp_norm(sp, f, 2) == pytest.approx(math.sqrt(1 + 8 + 8))
    assert lp_norm(sp, f, 1) == pytest.approx(1 + 4 + 2)
    assert lp_norm(sp, f, math.inf) == 4.0


def test_doubling_line_and_grid():
    assert estimate_doubling(line_space(64)).omega == pytest.approx(1.0, abs=0.15)
    assert estimate_doubling(grid_space(8, 8)).omega == pytest.approx(2.0, abs=0.3)


def test_doubling_profile_consistent():
    prof = estimate_doubling(random_cloud(60, seed=1))
    assert 0 <= prof.omega0 <= prof.omega
    assert prof.c_mu > 0
    assert prof.residuals["records"] > 0


def test_maximal_function_examples():
    sp = build_space(coords=[0.0, 1.0])
    np.testing.assert_allclose(maximal_function(sp, np.array([1.0, 0.0])), [1.0, 0.5])
    line = line_space(10)
    np.testing.assert_allclose(maximal_function(line, np.full(10, -3.0)), 3.0)


def brute_maximal(sp, f):
    out = np.zeros(sp.n)
    radii = np.unique(sp.dist)
    for c in range(sp.n):
        for r in radii:
            ball = sp.dist[c] <= r
            avg = (sp.weights[ball] @ np.abs(f[ball])) / sp.weights[ball].sum()
            out[ball] = np.maximum(out[ball], avg)
    return out


def test_maximal_function_matches_enumeration():
    sp = build_space(coords=np.random.default_rng(5).uniform(size=(12, 2)),
                     weights=np.random.default_rng(6).uniform(0.5, 2, 12))
    f = np.random.default_rng(7).standard_normal(12)
    np.testing.assert_allclose(maximal_function(sp, f), brute_maximal(sp, f), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12))
def test_maximal_dominates(seed, n):
    rng = np.random.default_rng(seed)
    sp = build_space(coords=rng.uniform(size=(n, 2)) + np.arange(n)[:, None] * 1e-3)
    f = rng.standard_normal(n)
    assert np.all(maximal_function(sp, f) >= np.abs(f) - 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 5.0), st.floats(0.0, 3.0))
def test_kernel_P_bounded_by_inverse_ball(seed, r, eps):
    rng = np.random.default_rng(seed)
    sp = build_space(coords=rng.uniform(size=(8, 2)) * 3 + np.arange(8)[:, None] * 1e-3)
    x, y = rng.integers(0, 8, 2)
    val = kernel_P(sp, eps, x, y, r)
    assert 0 < val <= 1 / ball_measure(sp, int(x), r) + 1e-15


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_ball_measure_monotone(seed):
    rng = np.random.default_rng(seed)
    sp = build_space(coords=rng.uniform(size=(10, 2)) + np.arange(10)[:, None] * 1e-3)
    radii = np.sort(rng.uniform(0.01, 3, 6))
    vals = np.array([ball_measures(sp, r) for r in radii])
    assert np.all(np.diff(vals, axis=0) >= 0)
    assert np.all(vals >= 1)
