"""Finite quasi-metric measure spaces.

A space is a finite point set with a dense symmetric distance matrix and
positive point masses.  Balls are open, ``B(x, r) = {y : d(x, y) < r}``, and
every integral is a weighted sum against the point masses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuasiMetricSpace",
    "DoublingProfile",
    "SpaceError",
    "build_space",
    "line_space",
    "grid_space",
    "random_cloud",
    "quasi_triangle_constant",
    "ball_measure",
    "ball_measures",
    "mutual_volume",
    "mutual_volume_matrix",
    "kernel_P",
    "estimate_doubling",
    "maximal_function",
    "lp_norm",
]

EXACT_A0_LIMIT = 512
SAMPLED_TRIPLES = 1_000_000
OMEGA_QUANTILE = 0.9
RADIUS_STEP = 2.0 ** 0.25


class SpaceError(ValueError):
    """Raised when input data does not describe a valid quasi-metric measure space."""


@dataclass(frozen=True, eq=False)
class QuasiMetricSpace:
    points: tuple
    dist: np.ndarray
    a0: float
    weights: np.ndarray
    coords: np.ndarray | None = None
    total_mass: float = field(init=False)
    diam: float = field(init=False)

    def __post_init__(self):
        self.dist.setflags(write=False)
        self.weights.setflags(write=False)
        object.__setattr__(self, "total_mass", math.fsum(self.weights))
        object.__setattr__(self, "diam", float(self.dist.max()))

    @property
    def n(self) -> int:
        return len(self.points)

    def integrate(self, f):
        """Integral of ``f`` (shape ``(n,)`` or ``(n, m)``) against the point masses."""
        return self.weights @ np.asarray(f)

    def inner(self, f, g):
        return self.integrate(np.asarray(f) * np.asarray(g))


@dataclass
class DoublingProfile:
    c_mu: float
    omega: float
    omega0: float
    residuals: dict


def quasi_triangle_constant(dist, rng=None):
    """Smallest ``A`` with ``d(x, z) <= A [d(x, y) + d(y, z)]`` over all triples.

    Exact (min-plus over the middle point) up to ``EXACT_A0_LIMIT`` points;
    above that a random sample of triples is used and inflated by 5%.
    """
    n = dist.shape[0]
    if n <= EXACT_A0_LIMIT:
        detour = dist.copy()
        for j in range(n):
            np.minimum(detour, dist[:, j, None] + dist[None, j, :], out=detour)
        off = ~np.eye(n, dtype=bool)
        return max(1.0, float(np.max(dist[off] / detour[off])))
    rng = np.random.default_rng(0) if rng is None else rng
    i, j, k = rng.integers(0, n, size=(3, SAMPLED_TRIPLES))
    keep = (i != k) & (j != i) & (j != k)
    i, j, k = i[keep], j[keep], k[keep]
    ratio = dist[i, k] / (dist[i, j] + dist[j, k])
    return max(1.0, 1.05 * float(ratio.max()))


def _round_up(x, digits=9):
    scale = 10.0 ** (digits - 1 - math.floor(math.log10(abs(x))))
    return math.ceil(x * scale * (1 - 1e-15)) / scale if x else 0.0


def build_space(points=None, metric="euclidean", weights=None, a0_hint=None,
                coords=None, dist=None, theta=1.0, symmetry_tol=1e-8):
    """Validate input data and return a :class:`QuasiMetricSpace`.

    Parameters
    ----------
    points : sequence, optional
        Point identifiers.  Defaults to ``0..n-1``.
    metric : {"euclidean", "snowflake", "matrix"}
        ``euclidean`` and ``snowflake`` (``|x - y| ** theta``) need ``coords``;
        ``matrix`` needs ``dist``.
    weights : array_like, optional
        Positive point masses; uniform 1 when absent.
    a0_hint : float, optional
        Upper bound the measured quasi-triangle constant must respect.
    symmetry_tol : float
        Asymmetry below this (relative to the largest entry) is symmetrized away.
    """
    if metric in ("euclidean", "snowflake"):
        if coords is None:
            raise SpaceError(f"metric {metric!r} needs coordinates")
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        diff = coords[:, None, :] - coords[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if metric == "snowflake":
            if not 0 < theta <= 1:
                raise SpaceError(f"snowflake exponent must lie in (0, 1], got {theta}")
            d = d ** theta
    elif metric == "matrix":
        if dist is None:
            raise SpaceError("metric 'matrix' needs a distance matrix")
        d = np.array(dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise SpaceError(f"distance matrix must be square, got shape {d.shape}")
        asym = np.max(np.abs(d - d.T)) if d.size else 0.0
        scale = max(float(np.max(np.abs(d))), 1e-300) if d.size else 1.0
        if asym > symmetry_tol * scale:
            i, j = np.unravel_index(np.argmax(np.abs(d - d.T)), d.shape)
            raise SpaceError(f"distance matrix not symmetric at ({i}, {j}): "
                             f"{d[i, j]!r} vs {d[j, i]!r}")
        d = 0.5 * (d + d.T)
    else:
        raise SpaceError(f"unknown metric {metric!r}")

    n = d.shape[0]
    if n < 2:
        raise SpaceError(f"a space needs at least 2 points, got {n}")
    if not np.all(np.isfinite(d)):
        raise SpaceError("distances must be finite")
    if np.any(np.diag(d) != 0):
        raise SpaceError("diagonal of the distance matrix must be zero")
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] <= 0):
        i, j = np.argwhere((d <= 0) & off)[0]
        raise SpaceError(f"zero or negative distance between distinct points {i} and {j}")

    if weights is None:
        w = np.ones(n)
    else:
        w = np.array(weights, dtype=float)
        if w.shape != (n,):
            raise SpaceError(f"expected {n} weights, got shape {w.shape}")
        bad = np.flatnonzero(~(w > 0))
        if bad.size:
            raise SpaceError(f"weight of point {bad[0]} must be positive, got {w[bad[0]]!r}")

    a0 = _round_up(quasi_triangle_constant(d))
    if a0_hint is not None and a0 > a0_hint:
        raise SpaceError(f"measured quasi-triangle constant {a0} exceeds hint {a0_hint}")
    ids = tuple(range(n)) if points is None else tuple(points)
    if len(ids) != n:
        raise SpaceError(f"{len(ids)} point ids for {n} points")
    return QuasiMetricSpace(points=ids, dist=d, a0=a0, weights=w,
                            coords=None if coords is None else np.asarray(coords, dtype=float))


def line_space(n, spacing=1.0, weights=None):
    """``n`` equally spaced points on a line."""
    return build_space(coords=np.arange(n, dtype=float) * spacing, weights=weights)


def grid_space(rows, cols, spacing=1.0):
    yy, xx = np.mgrid[0:rows, 0:cols]
    coords = np.column_stack([xx.ravel(), yy.ravel()]).astype(float) * spacing
    return build_space(coords=coords)


def random_cloud(n, dim=2, seed=0, scale=10.0):
    """Uniform random points in ``[0, scale]^dim``."""
    rng = np.random.default_rng(seed)
    return build_space(coords=rng.uniform(0.0, scale, size=(n, dim)))


def ball_measure(space, x, r):
    """``mu(B(x, r))`` for the open ball."""
    if r <= 0:
        raise ValueError(f"radius must be positive, got {r}")
    return math.fsum(space.weights[space.dist[x] < r])


def ball_measures(space, r):
    """``V_r(x)`` for every point ``x`` (``r`` scalar or per-point array)."""
    r = np.asarray(r, dtype=float)
    inside = space.dist < (r[:, None] if r.ndim else r)
    return inside @ space.weights


def mutual_volume(space, x, y):
    """``V(x, y) = mu(B(x, d(x, y)))``, zero on the diagonal."""
    if x == y:
        return 0.0
    return ball_measure(space, x, space.dist[x, y])


def mutual_volume_matrix(space):
    """``V(x, y)`` for all pairs (zero on the diagonal)."""
    d = space.dist
    # V(x, y) = sum_z w_z [d(x, z) < d(x, y)]
    order = np.argsort(d, axis=1, kind="stable")
    sorted_d = np.take_along_axis(d, order, axis=1)
    csum = np.cumsum(space.weights[order], axis=1)
    csum = np.concatenate([np.zeros((space.n, 1)), csum], axis=1)
    rows = np.arange(space.n)[:, None]
    first = np.empty_like(order)
    for i in range(space.n):
        first[i] = np.searchsorted(sorted_d[i], d[i], side="left")
    return csum[rows, first]


def kernel_P(space, eps, x, y, r):
    """``P_eps(x, y; r) = [V_r(x) + V(x, y)]^{-1} [r / (r + d(x, y))]^eps``.

    ``x`` and ``y`` may be integer indices or index arrays (broadcast together);
    ``r`` is a positive scalar or broadcastable array.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or eps < 0:
        raise ValueError("kernel_P needs r > 0 and eps >= 0")
    d = space.dist[x, y]
    vr = _ball_at(space, x, r)
    vxy = np.where(x == y, 0.0, _ball_at(space, x, np.where(d > 0, d, 1.0)))
    out = (r / (r + d)) ** eps / (vr + vxy)
    return float(out) if out.ndim == 0 else out


def _ball_at(space, x, r):
    x, r = np.broadcast_arrays(np.asarray(x), np.asarray(r, dtype=float))
    inside = space.dist[x.ravel()] < r.ravel()[:, None]
    return (inside @ space.weights).reshape(x.shape)


def lp_norm(space, f, p):
    """``L^p(mu)`` (quasi-)norm along axis 0; ``p = inf`` is the maximum."""
    a = np.abs(np.asarray(f, dtype=float))
    if math.isinf(p):
        return a.max(axis=0)
    return (space.weights @ a ** p) ** (1.0 / p)


def _radius_grid(space, lambdas):
    d = space.dist[~np.eye(space.n, dtype=bool)]
    dmin = float(d.min())
    lmax = max(lambdas)
    radii = []
    r = 1.5 * dmin
    while lmax * r <= space.diam:
        radii.append(r)
        r *= RADIUS_STEP
    if not radii:
        radii.append(1.5 * dmin)
    return np.array(radii)


def estimate_doubling(space, lambda_grid=(2.0, 4.0), max_centers=128):
    """Fit the doubling exponent from exact ball masses.

    For every center on a deterministic grid (all points, or an evenly strided
    subset of ``max_centers``), radii ``1.5 * dmin * 2^(j/4)`` kept while the
    dilated ball fits in the diameter, and every ``lambda`` in the grid, the
    ratio ``mu(lambda B) / mu(B)`` is recorded, giving the per-record exponent
    ``log ratio / log lambda``.  ``omega`` is the upper quantile
    ``OMEGA_QUANTILE`` of those exponents (an upper exponent, robust to the
    few tiny balls that a near-duplicate pair produces); ``c_mu`` is the
    smallest factor making ``ratio <= c_mu * lambda^omega`` hold on every
    record.  ``omega0`` is the median exponent, clipped to ``[0, omega]``.
    """
    if space.n < 2:
        raise SpaceError("doubling estimation needs at least two points")
    lambdas = np.asarray(sorted(lambda_grid), dtype=float)
    if np.any(lambdas <= 1):
        raise ValueError("lambda_grid must lie in (1, inf)")
    stride = max(1, math.ceil(space.n / max_centers))
    centers = np.arange(0, space.n, stride)
    radii = _radius_grid(space, lambdas)
    logs_l, logs_r = [], []
    for r in radii:
        base = (space.dist[centers] < r) @ space.weights
        for lam in lambdas:
            big = (space.dist[centers] < lam * r) @ space.weights
            logs_l.append(np.full(centers.size, math.log(lam)))
            logs_r.append(np.log(big / base))
    ll = np.concatenate(logs_l)
    lr = np.concatenate(logs_r)
    expo = lr / ll
    omega = max(float(np.quantile(expo, OMEGA_QUANTILE)), 0.0)
    c_mu = float(np.exp(np.max(lr - omega * ll)))
    omega0 = float(np.clip(np.median(expo), 0.0, omega))
    return DoublingProfile(
        c_mu=c_mu,
        omega=omega,
        omega0=omega0,
        residuals={
            "records": int(ll.size),
            "radii": radii.tolist(),
            "lambdas": lambdas.tolist(),
            "rms_log_residual": float(np.sqrt(np.mean((lr - omega * ll) ** 2))),
        },
    )


def maximal_function(space, f):
    """Uncentered Hardy-Littlewood maximal function, exact on a finite space.

    Every ball containing ``x`` has the form ``B(c, r)`` with ``r`` just above
    a realized distance from ``c``; for each center the nested ball averages
    are prefix averages in distance order, and the sup over balls containing
    ``x`` is a suffix maximum starting at ``x``'s rank.  ``f`` may carry extra
    trailing columns, handled independently.
    """
    a = np.abs(np.asarray(f, dtype=float))
    flat = a.ndim == 1
    if flat:
        a = a[:, None]
    n = space.n
    w = space.weights
    out = np.zeros_like(a)
    for c in range(n):
        dc = space.dist[c]
        order = np.argsort(dc, kind="stable")
        ds = dc[order]
        mass = np.cumsum(w[order])
        integral = np.cumsum(w[order, None] * a[order], axis=0)
        # a ball must swallow whole groups of equidistant points
        group_end = np.searchsorted(ds, ds, side="right") - 1
        avg = integral[group_end] / mass[group_end, None]
        suffix = np.maximum.accumulate(avg[::-1], axis=0)[::-1]
        np.maximum(out[order], suffix, out=suffix)
        out[order] = suffix
    return out[:, 0] if flat else out
