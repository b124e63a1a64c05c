"""Nested nets and the dyadic cube system built on them.

Levels run over ``k_min..k_max``: at ``k_min`` the net is a single point and
the only cube is the whole space; at ``k_max`` every point is a net point and
every cube is a singleton.  Scale ``k`` has length ``delta ** k``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetSystem",
    "DyadicTree",
    "WaveletCube",
    "CubeFamily",
    "NetError",
    "SandwichWarning",
    "build_nets",
    "build_tree",
    "wavelet_cubes",
    "refine",
    "sandwich_constants",
    "distance_to_reference",
    "max_refinement_count",
    "tree_to_dict",
    "check_tree",
]


class NetError(ValueError):
    pass


class SandwichWarning(UserWarning):
    pass


@dataclass
class NetSystem:
    delta: float
    k_min: int
    k_max: int
    nets: dict
    c0: float = 1.0
    C0: float = 1.0

    @property
    def levels(self):
        return range(self.k_min, self.k_max + 1)

    def scale(self, k):
        return self.delta ** k


@dataclass(frozen=True)
class WaveletCube:
    """A cube ``Q_alpha^{k+1}`` of the wavelet family, ``alpha`` new at ``k + 1``."""

    index: int
    level: int          # wavelet level k; the cube itself lives at k + 1
    alpha: int          # center point id, also the reference point y_alpha^k
    parent: int         # center of the enclosing level-k cube
    members: np.ndarray = field(repr=False, compare=False)
    ell: float = 0.0
    mass: float = 0.0

    @property
    def cube_level(self):
        return self.level + 1


@dataclass
class DyadicTree:
    net: NetSystem
    labels: dict                 # level -> per-point center id of its cube
    cubes: dict                  # level -> {center id: member array}
    children: dict               # (level, center) -> list of child centers at level + 1
    gk: dict                     # level k -> sorted ids of A_{k+1} \ A_k
    wavelet_family: list
    masses: dict                 # level -> {center id: mu(Q)}
    sandwich: dict
    j0: int = 1
    refinement: dict = field(default_factory=dict)

    @property
    def delta(self):
        return self.net.delta

    @property
    def k_min(self):
        return self.net.k_min

    @property
    def k_max(self):
        return self.net.k_max

    def y_set(self, k):
        """Reference points ``Y^k`` (the points new at level ``k + 1``)."""
        return self.gk.get(k, np.array([], dtype=int))


@dataclass
class CubeFamily:
    """An indexed list of cubes, the index set of coefficient sequences.

    ``homogeneous`` families hold the wavelet cubes.  ``inhomogeneous``
    families hold the level-``k0`` cubes followed by the wavelet cubes with
    wavelet level ``>= k0`` (cube level ``> k0``).
    """

    tree: DyadicTree
    kind: str
    k0: int
    cube_level: np.ndarray
    scale_level: np.ndarray    # exponent k in the delta^{-ks} weight
    alpha: np.ndarray
    is_scaling: np.ndarray
    ell: np.ndarray
    mass: np.ndarray
    membership: np.ndarray     # bool, (n_cubes, n_points)
    wavelet_rows: np.ndarray   # row of the wavelet basis, -1 for scaling cubes

    def __len__(self):
        return self.alpha.size

    @classmethod
    def homogeneous(cls, tree):
        fam = tree.wavelet_family
        n = tree.labels[tree.k_max].size
        member = np.zeros((len(fam), n), dtype=bool)
        for c in fam:
            member[c.index, c.members] = True
        lev = np.array([c.cube_level for c in fam], dtype=int)
        return cls(tree=tree, kind="homogeneous", k0=tree.k_min,
                   cube_level=lev, scale_level=lev - 1,
                   alpha=np.array([c.alpha for c in fam], dtype=int),
                   is_scaling=np.zeros(len(fam), dtype=bool),
                   ell=np.array([c.ell for c in fam]),
                   mass=np.array([c.mass for c in fam]),
                   membership=member,
                   wavelet_rows=np.arange(len(fam)))

    @classmethod
    def inhomogeneous(cls, tree, k0=None):
        k0 = tree.k_min if k0 is None else int(k0)
        if not tree.k_min <= k0 <= tree.k_max:
            raise ValueError(f"k0={k0} outside [{tree.k_min}, {tree.k_max}]")
        n = tree.labels[tree.k_max].size
        top = sorted(tree.cubes[k0])
        wav = [c for c in tree.wavelet_family if c.level >= k0]
        m = len(top) + len(wav)
        member = np.zeros((m, n), dtype=bool)
        for i, a in enumerate(top):
            member[i, tree.cubes[k0][a]] = True
        for i, c in enumerate(wav, start=len(top)):
            member[i, c.members] = True
        lev = np.array([k0] * len(top) + [c.cube_level for c in wav], dtype=int)
        return cls(tree=tree, kind="inhomogeneous", k0=k0,
                   cube_level=lev, scale_level=lev.copy(),
                   alpha=np.array(top + [c.alpha for c in wav], dtype=int),
                   is_scaling=np.array([True] * len(top) + [False] * len(wav)),
                   ell=tree.delta ** lev.astype(float),
                   mass=np.array([tree.masses[k0][a] for a in top] + [c.mass for c in wav]),
                   membership=member,
                   wavelet_rows=np.array([-1] * len(top) + [c.index for c in wav], dtype=int))

    def centers(self):
        return self.alpha

    def subset(self, mask):
        """The sub-family selected by a boolean mask, order preserved."""
        mask = np.asarray(mask, dtype=bool)
        return CubeFamily(tree=self.tree, kind=self.kind, k0=self.k0,
                          cube_level=self.cube_level[mask], scale_level=self.scale_level[mask],
                          alpha=self.alpha[mask], is_scaling=self.is_scaling[mask],
                          ell=self.ell[mask], mass=self.mass[mask],
                          membership=self.membership[mask],
                          wavelet_rows=self.wavelet_rows[mask])

    def keys(self):
        return list(zip(self.cube_level.tolist(), self.alpha.tolist()))


def _level_range(space, seed, delta, C0):
    radius = float(space.dist[seed].max())
    if radius == 0:
        return 0
    k = math.floor(math.log(radius / C0) / math.log(delta))
    # guard against rounding in the logarithm
    while C0 * delta ** k < radius:
        k -= 1
    while C0 * delta ** (k + 1) >= radius:
        k += 1
    return k


def build_nets(space, delta=0.125, c0=1.0, C0=1.0):
    """Greedy farthest-point nets, nested from coarse to fine.

    The coarsest net is the heaviest point (smallest id on ties).  Each finer
    level starts from the previous net and repeatedly inserts the point
    farthest from it (smallest id on ties) while that distance exceeds
    ``C0 * delta ** k``.  Separation and covering are checked afterwards.
    """
    if not 0 < delta < 1:
        raise NetError(f"delta must lie in (0, 1), got {delta}")
    if not 0 < c0 <= C0:
        raise NetError(f"need 0 < c0 <= C0, got c0={c0}, C0={C0}")
    n = space.n
    seed = int(np.argmax(space.weights))
    k = _level_range(space, seed, delta, C0)
    k_min = k
    net = [seed]
    nearest = space.dist[seed].copy()
    nets = {k: np.array(net)}
    while len(net) < n:
        k += 1
        radius = C0 * delta ** k
        while True:
            far = int(np.argmax(nearest))
            if nearest[far] <= radius:
                break
            net.append(far)
            np.minimum(nearest, space.dist[far], out=nearest)
        nets[k] = np.array(net)
    system = NetSystem(delta=delta, k_min=k_min, k_max=k, nets=nets, c0=c0, C0=C0)
    _verify_nets(space, system)
    return system


def _verify_nets(space, system):
    prev = None
    for k in system.levels:
        z = system.nets[k]
        r = system.scale(k)
        if z.size > 1:
            sub = space.dist[np.ix_(z, z)] + np.diag(np.full(z.size, np.inf))
            i, j = np.unravel_index(np.argmin(sub), sub.shape)
            if sub[i, j] < system.c0 * r:
                raise NetError(f"separation fails at level {k}: points {z[i]}, {z[j]} "
                               f"at distance {sub[i, j]} < {system.c0 * r}")
        cover = space.dist[z].min(axis=0)
        if cover.max() > system.C0 * r:
            x = int(np.argmax(cover))
            raise NetError(f"covering fails at level {k}: point {x} at distance "
                           f"{cover[x]} > {system.C0 * r}")
        if prev is not None and not np.isin(prev, z).all():
            raise NetError(f"nets not nested at level {k}")
        prev = z


def build_tree(space, net, j0=1):
    """Dyadic cubes from the net hierarchy.

    Every level-``k`` net point picks as parent the nearest level-``(k-1)``
    net point (itself when it already belongs to the coarser net; smallest id
    on ties).  ``Q_alpha^k`` is the set of points whose ancestor at level
    ``k`` is ``alpha``; this gives partition and nesting by construction.  The
    ball sandwich is measured and a :class:`SandwichWarning` is issued when
    it misses the constants ``(3 A0^2)^{-1} c0`` and ``2 A0 C0``.
    """
    n = space.n
    labels = {net.k_max: np.arange(n)}
    for k in range(net.k_max, net.k_min, -1):
        coarse = net.nets[k - 1]
        fine = net.nets[k]
        d = space.dist[np.ix_(fine, coarse)]
        # ties broken by smallest id: order the coarse columns by id first
        order = np.argsort(coarse, kind="stable")
        parent_of = coarse[order][np.argmin(d[:, order], axis=1)]
        lookup = np.empty(n, dtype=int)
        lookup[fine] = parent_of
        labels[k - 1] = lookup[labels[k]]

    cubes, masses, children = {}, {}, {}
    for k in net.levels:
        cubes[k] = {}
        masses[k] = {}
        for a in np.sort(net.nets[k]):
            members = np.flatnonzero(labels[k] == a)
            cubes[k][int(a)] = members
            masses[k][int(a)] = math.fsum(space.weights[members])
        if k > net.k_min:
            for a in np.sort(net.nets[k]):
                children.setdefault((k - 1, int(labels[k - 1][a])), []).append(int(a))

    gk, family = {}, []
    for k in range(net.k_min, net.k_max):
        new = np.setdiff1d(net.nets[k + 1], net.nets[k])
        gk[k] = new
        for a in new:
            a = int(a)
            family.append(WaveletCube(index=len(family), level=k, alpha=a,
                                      parent=int(labels[k][a]),
                                      members=cubes[k + 1][a],
                                      ell=net.delta ** (k + 1),
                                      mass=masses[k + 1][a]))

    tree = DyadicTree(net=net, labels=labels, cubes=cubes, children=children,
                      gk=gk, wavelet_family=family, masses=masses, sandwich={})
    tree.sandwich = sandwich_constants(space, tree)
    if not tree.sandwich["holds"]:
        warnings.warn(
            "dyadic cubes miss the ball sandwich: measured inner "
            f"{tree.sandwich['inner']:.4g} (need >= {tree.sandwich['c_inner']:.4g}), "
            f"outer {tree.sandwich['outer']:.4g} (need < {tree.sandwich['C_outer']:.4g})",
            SandwichWarning, stacklevel=2)
    refine(tree, j0)
    return tree


def sandwich_constants(space, tree):
    """Measured inner/outer radius factors of the cubes against the sufficient ones."""
    net = tree.net
    c_in = net.c0 / (3 * space.a0 ** 2)
    c_out = 2 * space.a0 * net.C0
    inner, outer = math.inf, 0.0
    for k in net.levels:
        r = net.delta ** k
        lab = tree.labels[k]
        for a, members in tree.cubes[k].items():
            d = space.dist[a]
            outside = lab != a
            if outside.any():
                inner = min(inner, float(d[outside].min()) / r)
            outer = max(outer, float(d[members].max()) / r)
    return {"c_inner": c_in, "C_outer": c_out, "inner": inner, "outer": outer,
            "holds": bool(inner >= c_in and outer < c_out)}


def wavelet_cubes(tree):
    """``(cube, center, side length, wavelet level)`` for every cube of the wavelet family."""
    return [(c, c.alpha, c.ell, c.level) for c in tree.wavelet_family]


def refine(tree, j0):
    """Level-``(k + j0)`` descendants of every cube, clamped at ``k_max``.

    Returns ``{(k, alpha): [sub-cube centers]}`` and stores it on the tree
    together with ``j0``.
    """
    if int(j0) != j0 or j0 < 1:
        raise ValueError(f"j0 must be a positive integer, got {j0}")
    j0 = int(j0)
    table = {}
    for k in tree.net.levels:
        fine = min(k + j0, tree.k_max)
        lab_coarse = tree.labels[k]
        for a in tree.cubes[k]:
            subs = [b for b in tree.cubes[fine] if lab_coarse[b] == a]
            table[(k, a)] = sorted(subs)
    tree.j0 = j0
    tree.refinement = table
    return table


def max_refinement_count(tree):
    return max(len(v) for v in tree.refinement.values())


def distance_to_reference(space, tree, k):
    """``d(y, Y^k)`` for every point ``y``; ``inf`` when ``Y^k`` is empty."""
    ys = tree.y_set(k)
    if ys.size == 0:
        return np.full(space.n, math.inf)
    return space.dist[ys].min(axis=0)


def tree_to_dict(tree):
    """JSON-ready description of the nets, cubes, reference points and refinement."""
    levels = []
    for k in tree.net.levels:
        levels.append({
            "level": k,
            "scale": tree.delta ** k,
            "net": [int(a) for a in np.sort(tree.net.nets[k])],
            "cubes": [{"center": a, "members": tree.cubes[k][a].tolist(),
                       "mass": tree.masses[k][a]} for a in sorted(tree.cubes[k])],
            "new_points": [int(a) for a in tree.gk.get(k, [])],
        })
    return {
        "delta": tree.delta,
        "k_min": tree.k_min,
        "k_max": tree.k_max,
        "c0": tree.net.c0,
        "C0": tree.net.C0,
        "sandwich": tree.sandwich,
        "levels": levels,
        "wavelet_cubes": [{"level": c.level, "alpha": c.alpha, "parent": c.parent,
                           "ell": c.ell, "mass": c.mass} for c in tree.wavelet_family],
        "j0": tree.j0,
        "refinement": [{"level": k, "alpha": a, "subcubes": subs}
                       for (k, a), subs in sorted(tree.refinement.items())],
    }


def check_tree(space, tree, c_inner=None, c_outer=None):
    """Check separation, covering, partition, nesting and the ball sandwich.

    ``c_inner`` and ``c_outer`` default to ``c0 / (3 A0^2)`` and ``2 A0 C0``.
    Returns ``{"i": bool, ..., "v": bool}`` plus the measured sandwich factors.
    """
    net = tree.net
    c_in = net.c0 / (3 * space.a0 ** 2) if c_inner is None else c_inner
    c_out = 2 * space.a0 * net.C0 if c_outer is None else c_outer
    d = space.dist
    out = {"i": True, "ii": True, "iii": True, "iv": True, "v": True}
    for k in net.levels:
        r = net.delta ** k
        z = np.sort(net.nets[k])
        if z.size > 1:
            sub = d[np.ix_(z, z)]
            out["i"] &= bool(sub[~np.eye(z.size, dtype=bool)].min() >= net.c0 * r)
        out["ii"] &= bool(d[z].min(axis=0).max() <= net.C0 * r)
        lab = tree.labels[k]
        counts = np.zeros(space.n, dtype=int)
        for a, members in tree.cubes[k].items():
            counts[members] += 1
            out["iii"] &= bool(np.all(lab[members] == a))
            ball_in = np.flatnonzero(d[a] < c_in * r)
            out["v"] &= bool(np.all(lab[ball_in] == a) and d[a, members].max() < c_out * r)
        out["iii"] &= bool(np.all(counts == 1)) and set(tree.cubes[k]) == set(z.tolist())
        if k < net.k_max:
            fine = tree.labels[k + 1]
            # every finer cube sits inside exactly one coarser cube
            for b, members in tree.cubes[k + 1].items():
                out["iv"] &= bool(np.unique(lab[members]).size == 1)
            out["iv"] &= bool(np.all(lab[fine] == lab))
    out["c_inner"] = c_in
    out["c_outer"] = c_out
    out["holds"] = all(out[key] for key in ("i", "ii", "iii", "iv", "v"))
    return out
