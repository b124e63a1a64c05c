import math

import numpy as np
import pytest

from homtype.dyadic import build_nets, build_tree
from homtype.lp_functionals import (change_of_angle_fit, default_cutoff, equivalence_report,
                                    g_function, g_lambda_star, kernel_F_norm, lambda_window,
                                    lusin_area, lusin_area_aperture, make_ensemble)
from homtype.seqspaces import ParamError, SpaceParams
from homtype.space import ball_measures, estimate_doubling, line_space, lp_norm, random_cloud
from homtype.wavelets import build_haar, build_kernels


@pytest.fixture(scope="module")
def line64():
    sp = line_space(64)
    tree = build_tree(sp, build_nets(sp))
    basis = build_haar(sp, tree)
    return sp, tree, basis, build_kernels(basis), estimate_doubling(sp)


def tl(prof, **kw):
    return SpaceParams(kind="triebel_lizorkin", omega=prof.omega, omega0=prof.omega0, **kw)


def test_zero_function(line64):
    sp, _t, _b, ker, _p = line64
    z = np.zeros(sp.n)
    for kind in ("homogeneous", "inhomogeneous"):
        assert np.all(g_function(sp, ker, z, kind=kind) == 0)
        assert np.all(lusin_area(sp, ker, z, kind=kind) == 0)
        assert np.all(g_lambda_star(sp, ker, z, kind=kind) == 0)


def test_plancherel_for_g(line64):
    sp, tree, _b, ker, _p = line64
    F = np.random.default_rng(0).standard_normal((sp.n, 8))
    g = g_function(sp, ker, F, s=0.0, q=2.0)
    detail = F - ker.apply(ker.pk[tree.k_min], F)
    np.testing.assert_allclose(lp_norm(sp, g, 2), lp_norm(sp, detail, 2), rtol=1e-9)


@pytest.mark.parametrize("s, p, q, hom", [(0.0, 2.0, 2.0, True), (0.25, 2.0, 4 / 3, True),
                                          (-0.1, 1.5, 3.0, False), (0.1, 1.0, math.inf, True)])
def test_g_path_matches_kernel_norm_bitwise(line64, s, p, q, hom):
    sp, _t, _b, ker, prof = line64
    F = np.random.default_rng(1).standard_normal((sp.n, 5))
    pr = tl(prof, s=s, p=p, q=q, homogeneous=hom)
    kind = "homogeneous" if hom else "inhomogeneous"
    via_g = lp_norm(sp, g_function(sp, ker, F, s, q, kind), p)
    assert np.array_equal(via_g, kernel_F_norm(sp, ker, F, pr))


def test_g_single_level_formula(line64):
    sp, tree, _b, ker, _p = line64
    f = np.random.default_rng(2).standard_normal(sp.n)
    s, q = 0.3, 1.5
    terms = [(ker.apply(ker.dk[k], f), k) for k in range(tree.k_min, tree.k_max)]
    ref = sum(tree.delta ** (-k * s * q) * np.abs(v) ** q for v, k in terms) ** (1 / q)
    np.testing.assert_allclose(g_function(sp, ker, f, s, q), ref, rtol=1e-12)


def test_aperture_monotone(line64):
    sp, _t, _b, ker, _p = line64
    F = np.random.default_rng(3).standard_normal((sp.n, 4))
    prev = None
    for theta in (1.0, 1.5, 2.0, 4.0, 8.0):
        cur = lusin_area_aperture(sp, ker, F, theta=theta)
        if prev is not None:
            assert np.all(cur >= prev * (1 - 1e-12))
        prev = cur
    with pytest.raises(ValueError):
        lusin_area_aperture(sp, ker, F, theta=0.5)


def test_g_star_monotone_and_diagonal_limit(line64):
    sp, tree, _b, ker, _p = line64
    f = np.random.default_rng(4).standard_normal(sp.n)
    vals = [g_lambda_star(sp, ker, f, lambda_ap=lam) for lam in (1.0, 2.0, 8.0, 50.0, 200.0)]
    for a, b in zip(vals, vals[1:]):
        assert np.all(b <= a * (1 + 1e-12))
    # as lambda grows only y = x survives: |Q_k f(x)|^2 mu(x) / (2 V_{delta^k}(x))
    w = sp.weights
    diag = 0.0
    for k in range(tree.k_min, tree.k_max):
        r = tree.delta ** k
        diag = diag + w * ker.apply(ker.dk[k], f) ** 2 / (2 * ball_measures(sp, r))
    lim = g_lambda_star(sp, ker, f, lambda_ap=5000.0)
    np.testing.assert_allclose(lim, np.sqrt(diag), rtol=1e-6)
    assert np.all(vals[-1] >= lim * (1 - 1e-12))
    with pytest.raises(ValueError):
        g_lambda_star(sp, ker, f, lambda_ap=0.0)


def test_area_dominated_by_g_star(line64):
    # for d < r the g* kernel is at least 2^-lambda / (V_r(x) (1 + rho)),
    # with rho the largest V_r(y)/V_r(x) over y in B(x, r)
    sp, tree, _b, ker, _p = line64
    lam = 3.0
    rho = 0.0
    for k in range(tree.k_min, tree.k_max):
        r = tree.delta ** k
        v = ball_measures(sp, r)
        inside = sp.dist < r
        rho = max(rho, float(np.max(np.where(inside, v[None, :] / v[:, None], 0))))
    C = math.sqrt(2 ** lam * (1 + rho))
    F = np.random.default_rng(5).standard_normal((sp.n, 6))
    S = lusin_area(sp, ker, F)
    gs = g_lambda_star(sp, ker, F, lambda_ap=lam)
    assert np.all(S <= C * gs * (1 + 1e-12))


def test_lambda_window_and_cutoff(line64):
    _sp, tree, _b, _k, prof = line64
    pr = SpaceParams(p=2.0, q=4.0, omega=1.2, omega0=1.0)
    assert lambda_window(pr) == pytest.approx(2.0)
    assert lambda_window(SpaceParams(p=2.0, q=1.0, omega=1.2, omega0=1.0)) == pytest.approx(1.0)
    assert default_cutoff(tree) == min(tree.k_min + 2, tree.k_max)


def test_ensemble_shapes(line64):
    sp, _t, basis, ker, _p = line64
    F, labels = make_ensemble(sp, basis, ker, 5, np.random.default_rng(0))
    assert F.shape == (sp.n, 15) and labels.count("smoothed") == 5
    # every ensemble function has mean zero
    assert np.abs(sp.weights @ F).max() <= 1e-10
    with pytest.raises(ValueError):
        make_ensemble(sp, basis, ker, 1, np.random.default_rng(0), families=("nope",))


def test_equivalence_report(line64):
    sp, _t, basis, ker, prof = line64
    pr = tl(prof, s=0.0, p=2.0, q=2.0)
    rep = equivalence_report(sp, basis, ker, pr, size=10, seed=0)
    assert rep["in_window"] and rep["lambda"] == pytest.approx(lambda_window(pr.resolved()) + 1)
    for band in rep["bands"].values():
        assert band["C_emp"] >= 1 and band["C_emp_doubled"] >= band["C_emp"]
    # s = 0, p = q = 2: the g-function reproduces the wavelet norm on mean-zero functions
    assert rep["bands"]["g"]["C_emp"] == pytest.approx(1.0, abs=1e-9)
    assert rep == equivalence_report(sp, basis, ker, pr, size=10, seed=0)
    low = equivalence_report(sp, basis, ker, pr, lambda_ap=0.5, size=3)
    assert not low["in_window"]
    with pytest.raises(ParamError):
        equivalence_report(sp, basis, ker, SpaceParams(), size=3)


def test_equivalence_report_zero_functions(line64):
    sp, _t, basis, ker, prof = line64
    rep = equivalence_report(sp, basis, ker, tl(prof), size=2,
                             functions=np.zeros((sp.n, 3)))
    assert rep["norms"]["wavelet"][-3:] == [0.0, 0.0, 0.0]
    assert all(b["C_emp"] is not None for b in rep["bands"].values())


def test_change_of_angle_contract(line64):
    sp, _t, basis, ker, prof = line64
    pr = tl(prof, p=2.0, q=1.0)
    with pytest.raises(ValueError):
        change_of_angle_fit(sp, ker, pr, thetas=(1,), basis=basis)
    with pytest.raises(ValueError):
        change_of_angle_fit(sp, ker, pr, thetas=(0.5, 1, 2), basis=basis)
    with pytest.raises(ParamError):
        change_of_angle_fit(sp, ker, tl(prof, p=2.0, q=2.0), basis=basis)
    rep = change_of_angle_fit(sp, ker, pr, basis=basis, size=3, seed=0)
    assert rep["bound"] == pytest.approx(pr.resolved().omega / 2 + 0.2)
    assert all(sl >= -1e-9 for sl in rep["slopes"])
    assert rep["max_slope"] == max(rep["slopes"])


def test_inhomogeneous_g_uses_cube_means():
    sp = random_cloud(40, seed=1)
    tree = build_tree(sp, build_nets(sp))
    ker = build_kernels(build_haar(sp, tree))
    f = np.random.default_rng(6).standard_normal(sp.n)
    g = g_function(sp, ker, f, kind="inhomogeneous")
    assert np.all(np.isfinite(g)) and np.all(g >= 0)
    # constants survive only through the P_{k0} term
    c = g_function(sp, ker, np.ones(sp.n), kind="inhomogeneous")
    np.testing.assert_allclose(c, 1.0, rtol=1e-10)
