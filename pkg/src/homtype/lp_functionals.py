"""Littlewood-Paley functionals built from the detail kernels.

Every functional takes ``f`` with one value per point (or batch columns) and
returns per-point values with the same trailing shape.  ``kind`` selects the
homogeneous sums over ``D_k`` or the inhomogeneous ones, which start with
``P_{k0}`` and, for the g-function and the Besov norm, replace the levels up
to the cutoff ``N`` by unweighted means over refinement cubes.
"""
from __future__ import annotations

import math

import numpy as np

from .seqspaces import require_valid, wavelet_function_norm, ParamError
from .space import ball_measures, lp_norm
from .wavelets import CoefficientSequence, synthesize

__all__ = [
    "detail_terms",
    "g_function",
    "kernel_F_norm",
    "kernel_B_norm",
    "lusin_area",
    "lusin_area_aperture",
    "g_lambda_star",
    "lambda_window",
    "make_ensemble",
    "equivalence_report",
    "change_of_angle_fit",
    "default_cutoff",
]


def default_cutoff(tree):
    return min(tree.k_min + 2, tree.k_max)


def detail_terms(kernels, f, kind="homogeneous", k0=None):
    """``[(Q_k f, scale level k)]`` for the reproducing sum of ``kind``."""
    f = np.asarray(f, dtype=float)
    return [(kernels.apply(K, f), k) for K, k, _ in kernels.terms(kind, k0)]


def _weights(delta, k, s, q):
    return delta ** (-k * s * q)


def _refined_labels(tree, k):
    return tree.labels[min(k + tree.j0, tree.k_max)]


def _cube_means(space, labels, values):
    """Per-point ``m_Q(values)`` over the cube (given by ``labels``) containing the point."""
    w = space.weights
    uniq, inv = np.unique(labels, return_inverse=True)
    flat = values.reshape(space.n, -1)
    num = np.zeros((uniq.size, flat.shape[1]))
    np.add.at(num, inv, w[:, None] * flat)
    den = np.bincount(inv, weights=w)
    return (num / den[:, None])[inv].reshape(values.shape)


def _combine(parts, q):
    if math.isinf(q):
        return np.max(parts, axis=0)
    return np.sum(parts, axis=0) ** (1.0 / q)


def _g_values(space, kernels, f, s, q, kind, k0, n_cutoff):
    tree = kernels.tree
    delta = tree.delta
    if kind == "inhomogeneous":
        n_cutoff = default_cutoff(tree) if n_cutoff is None else n_cutoff
    parts = []
    for val, k in detail_terms(kernels, f, kind, k0):
        a = np.abs(val)
        if kind == "inhomogeneous" and k <= n_cutoff:
            if math.isinf(q):
                parts.append(_cube_means(space, _refined_labels(tree, k), a))
            else:
                parts.append(_cube_means(space, _refined_labels(tree, k), a ** q))
        elif math.isinf(q):
            parts.append(delta ** (-k * s) * a)
        else:
            parts.append(_weights(delta, k, s, q) * a ** q)
    return _combine(parts, q)


def g_function(space, kernels, f, s=0.0, q=2.0, kind="homogeneous", k0=None, n_cutoff=None):
    """Littlewood-Paley g-function, per point.

    Homogeneous: ``[sum_k delta^{-ksq} |D_k f|^q]^{1/q}``.  Inhomogeneous:
    levels ``k <= N`` contribute ``m_{Q'}(|Q_k f|^q)`` over the refinement
    cube ``Q'`` containing the point (no weight), and levels ``k > N`` the
    weighted term.  ``q = inf`` takes the sup over ``k``.
    """
    return _g_values(space, kernels, f, s, q, kind, k0, n_cutoff)


def kernel_F_norm(space, kernels, f, params):
    """Triebel-Lizorkin norm of ``f`` from the kernels: ``||(sum_k delta^{-ksq}|Q_k f|^q)^{1/q}||_p``."""
    kind = "homogeneous" if params.homogeneous else "inhomogeneous"
    vals = _g_values(space, kernels, f, params.s, params.q, kind, params.k0, params.n_cutoff)
    return lp_norm(space, vals, params.p)


def kernel_B_norm(space, kernels, f, params):
    """Besov norm of ``f`` from the kernels.

    Homogeneous: ``(sum_k delta^{-ksq} ||Q_k f||_p^q)^{1/q}``.  Inhomogeneous:
    ``(sum_{k<=N} sum_{Q'} mu(Q') m_{Q'}(|Q_k f|)^p)^{1/p}`` over refinement
    cubes plus the weighted sum over ``k > N``.
    """
    tree = kernels.tree
    delta = tree.delta
    p, q, s = params.p, params.q, params.s
    hom = params.homogeneous
    kind = "homogeneous" if hom else "inhomogeneous"
    n_cutoff = None if hom else (default_cutoff(tree) if params.n_cutoff is None else params.n_cutoff)
    low, high = [], []
    for val, k in detail_terms(kernels, f, kind, params.k0):
        a = np.abs(val)
        if not hom and k <= n_cutoff:
            means = _cube_means(space, _refined_labels(tree, k), a)
            # sum over refinement cubes of mu(Q') m^p equals the L^p norm of the per-point means
            low.append(lp_norm(space, means, p))
        else:
            high.append(delta ** (-k * s) * lp_norm(space, a, p))
    total = 0.0
    if high:
        high = np.array(high)
        total = high.max(axis=0) if math.isinf(q) else (high ** q).sum(axis=0) ** (1 / q)
    if low:
        low = np.array(low)
        total = total + (low.max(axis=0) if math.isinf(p) else (low ** p).sum(axis=0) ** (1 / p))
    return total


def _ball_matrix(space, radius):
    return (space.dist < radius).astype(float)


def lusin_area(space, kernels, f, s=0.0, q=2.0, kind="homogeneous", k0=None):
    """``[sum_k delta^{-ksq} int_{B(x, delta^k)} |Q_k f|^q dmu / V_{delta^k}(x)]^{1/q}``."""
    delta = kernels.tree.delta
    w = space.weights
    parts = []
    for val, k in detail_terms(kernels, f, kind, k0):
        r = delta ** k
        ball = _ball_matrix(space, r)
        a = np.abs(val)
        if math.isinf(q):
            parts.append(delta ** (-k * s) * _ball_sup(ball, a))
            continue
        vol = ball_measures(space, r)
        integ = ball @ (_col(w, a) * a ** q)
        parts.append(_weights(delta, k, s, q) * integ / _col(vol, a))
    return _combine(parts, q)


def lusin_area_aperture(space, kernels, f, s=0.0, q=2.0, theta=1.0, kind="homogeneous", k0=None):
    """``[sum_k delta^{-ksq} int_{B(x, theta delta^k)} |Q_k f(y)|^q dmu(y) / V_{delta^k}(y)]^{1/q}``."""
    if theta < 1:
        raise ValueError(f"aperture must be >= 1, got {theta}")
    delta = kernels.tree.delta
    w = space.weights
    parts = []
    for val, k in detail_terms(kernels, f, kind, k0):
        r = delta ** k
        ball = _ball_matrix(space, theta * r)
        a = np.abs(val)
        if math.isinf(q):
            parts.append(delta ** (-k * s) * _ball_sup(ball, a))
            continue
        vol = ball_measures(space, r)
        parts.append(_weights(delta, k, s, q) * (ball @ (_col(w / vol, a) * a ** q)))
    return _combine(parts, q)


def g_lambda_star(space, kernels, f, s=0.0, q=2.0, lambda_ap=2.0, kind="homogeneous", k0=None):
    """``{sum_k delta^{-ksq} int |Q_k f(y)|^q [delta^k/(delta^k+d)]^lambda
    dmu(y) / (V_{delta^k}(x) + V_{delta^k}(y))}^{1/q}``."""
    if lambda_ap <= 0:
        raise ValueError(f"lambda must be positive, got {lambda_ap}")
    delta = kernels.tree.delta
    w = space.weights
    d = space.dist
    parts = []
    for val, k in detail_terms(kernels, f, kind, k0):
        r = delta ** k
        vol = ball_measures(space, r)
        kern = (r / (r + d)) ** lambda_ap / (vol[:, None] + vol[None, :])
        a = np.abs(val)
        if math.isinf(q):
            parts.append(delta ** (-k * s) * _ball_sup(kern * w[None, :], a))
            continue
        parts.append(_weights(delta, k, s, q) * (kern @ (_col(w, a) * a ** q)))
    return _combine(parts, q)


def _col(v, like):
    return v[:, None] if like.ndim == 2 else v


def _ball_sup(mat, a):
    if a.ndim == 1:
        return (mat * a[None, :]).max(axis=1)
    return np.stack([(mat * a[None, :, j]).max(axis=1) for j in range(a.shape[1])], axis=1)


def lambda_window(params):
    """Lower end ``max{omega0, q omega0 / p}`` of the admissible ``lambda``."""
    return max(params.omega0, params.q * params.omega0 / params.p)


def make_ensemble(space, basis, kernels, size, rng, families=("sparse", "smoothed", "dense")):
    """Columns of test functions, ``size`` per family.

    ``sparse``: a few random wavelet coefficients.  ``smoothed``: a point mass
    at a random point smoothed by ``P_k`` at a random level, minus its mean.
    ``dense``: random-sign coefficients of random magnitude on every wavelet.
    """
    fam = basis.homogeneous_family()
    m = len(fam)
    tree = basis.tree
    cols, labels = [], []
    for name in families:
        for _ in range(size):
            if name == "sparse":
                vals = np.zeros(m)
                idx = rng.choice(m, size=min(m, int(rng.integers(1, 6))), replace=False)
                vals[idx] = rng.standard_normal(idx.size)
                f = synthesize(basis, CoefficientSequence(fam, vals))
            elif name == "smoothed":
                k = int(rng.integers(tree.k_min + 1, tree.k_max + 1))
                x = int(rng.integers(space.n))
                spike = np.zeros(space.n)
                spike[x] = 1.0 / space.weights[x]
                f = kernels.apply(kernels.pk[k], spike)
                f = f - space.integrate(f) / space.total_mass
            elif name == "dense":
                vals = rng.choice([-1.0, 1.0], size=m) * rng.uniform(0.1, 1.0, size=m)
                f = synthesize(basis, CoefficientSequence(fam, vals))
            else:
                raise ValueError(f"unknown ensemble family {name!r}")
            cols.append(f)
            labels.append(name)
    return np.column_stack(cols), labels


def _band(num, den):
    ok = den > 0
    r = num[ok] / den[ok]
    r = r[r > 0]
    if r.size == 0:
        return None
    return float(np.max(np.maximum(r, 1 / r)))


def equivalence_report(space, basis, kernels, params, lambda_ap=None, size=100, seed=0,
                       functions=None):
    """Norm table and ratio bands of the square functions against the wavelet norm.

    For each test function: the wavelet Triebel-Lizorkin norm, ``||g||_p``
    (the kernel norm), ``||S||_p`` and ``||g*_lambda||_p``.  ``C_emp`` is the
    smallest ``C`` with every ratio in ``[1/C, C]``; it is computed on the
    ensemble and on the ensemble doubled, and ``stable`` records whether it
    moved by less than 25%.  ``lambda`` defaults to one above the window's
    lower end; runs outside the window are flagged, not refused.
    """
    pr = require_valid(params)
    if pr.is_besov:
        raise ParamError(["the square-function report needs a triebel_lizorkin kind"])
    kind = "homogeneous" if pr.homogeneous else "inhomogeneous"
    lam_lo = lambda_window(pr)
    lambda_ap = lam_lo + 1.0 if lambda_ap is None else lambda_ap
    rng = np.random.default_rng(seed)
    F, labels = make_ensemble(space, basis, kernels, 2 * size, rng)
    if functions is not None:
        extra = np.asarray(functions, dtype=float).reshape(space.n, -1)
        F = np.column_stack([F, extra])
        labels += ["user"] * extra.shape[1]
    # first-half mask: the first `size` functions of every family, plus user functions
    first = np.zeros(F.shape[1], dtype=bool)
    for i, name in enumerate(labels):
        first[i] = name == "user" or labels[:i].count(name) < size

    wav = np.atleast_1d(wavelet_function_norm(space, basis, F, pr))
    gn = np.atleast_1d(kernel_F_norm(space, kernels, F, pr))
    sn = np.atleast_1d(lp_norm(space, lusin_area(space, kernels, F, pr.s, pr.q, kind, pr.k0), pr.p))
    gs = np.atleast_1d(lp_norm(space, g_lambda_star(space, kernels, F, pr.s, pr.q, lambda_ap,
                                                     kind, pr.k0), pr.p))
    bands = {}
    for name, num in (("g", gn), ("S", sn), ("g_star", gs)):
        c1 = _band(num[first], wav[first])
        c2 = _band(num, wav)
        bands[name] = {"C_emp": c1, "C_emp_doubled": c2,
                       "stable": None if c1 is None else bool(c2 <= 1.25 * c1)}
    return {
        "kind": kind,
        "s": pr.s,
        "p": pr.p,
        "q": pr.q,
        "lambda": lambda_ap,
        "lambda_window_low": lam_lo,
        "in_window": bool(lambda_ap > lam_lo),
        "size": size,
        "seed": seed,
        "families": sorted(set(labels)),
        "norms": {"wavelet": wav[first].tolist(), "g": gn[first].tolist(),
                  "S": sn[first].tolist(), "g_star": gs[first].tolist()},
        "bands": bands,
        "stable": all(b["stable"] is not False for b in bands.values()),
    }


def change_of_angle_fit(space, kernels, params, thetas=(1, 2, 4, 8), functions=None,
                        basis=None, size=20, seed=0):
    """Least-squares exponent of ``||S_theta||_p`` in ``theta``, per function.

    Requires ``q < p`` and at least three apertures ``>= 1``.  Reports the
    largest fitted slope and whether it stays below ``omega / p + 0.2``.
    """
    thetas = [float(t) for t in thetas]
    if len(set(thetas)) < 3:
        raise ValueError("need at least three distinct apertures")
    if min(thetas) < 1:
        raise ValueError("apertures must be >= 1")
    pr = params.resolved()
    if not pr.q < pr.p:
        raise ParamError([f"the change-of-angle bound needs q < p, got q={pr.q}, p={pr.p}"])
    kind = "homogeneous" if pr.homogeneous else "inhomogeneous"
    if functions is None:
        if basis is None:
            raise ValueError("pass test functions or a basis to draw them from")
        functions, _ = make_ensemble(space, basis, kernels, size, np.random.default_rng(seed))
    F = np.asarray(functions, dtype=float).reshape(space.n, -1)
    norms = np.array([lp_norm(space, lusin_area_aperture(space, kernels, F, pr.s, pr.q, t,
                                                          kind, pr.k0), pr.p)
                      for t in thetas])
    live = (norms > 0).all(axis=0)
    logt = np.log(thetas)
    slopes = np.polyfit(logt, np.log(norms[:, live]), 1)[0] if live.any() else np.zeros(0)
    limit = pr.omega / pr.p + 0.2
    max_slope = float(slopes.max()) if slopes.size else 0.0
    return {
        "thetas": thetas,
        "p": pr.p,
        "q": pr.q,
        "omega": pr.omega,
        "slopes": slopes.tolist(),
        "max_slope": max_slope,
        "bound": limit,
        "pass": bool(max_slope <= limit),
    }
