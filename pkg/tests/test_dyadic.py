import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homtype.dyadic import (CubeFamily, NetError, build_nets, build_tree, check_tree,
                            distance_to_reference, max_refinement_count, refine,
                            tree_to_dict)
from homtype.space import build_space, line_space, random_cloud


def binary_line():
    b = np.array([[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)])
    return build_space(coords=1.5 * (b[:, 0] + 4 * b[:, 1] + 16 * b[:, 2]).astype(float))


def ancestry_labels(space, nets, k_min, k_max):
    """Reference assignment: walk every point up the nearest-coarser-net-point chain."""
    labels = {k_max: list(range(space.n))}
    for k in range(k_max, k_min, -1):
        coarse = sorted(int(a) for a in nets[k - 1])
        parent = {}
        for a in nets[k]:
            a = int(a)
            best = min(coarse, key=lambda c: (space.dist[a, c], c))
            parent[a] = best
        labels[k - 1] = [parent[labels[k][x]] for x in range(space.n)]
    return labels


def test_four_point_line():
    sp = build_space(coords=[0.0, 1.0, 2.0, 3.0])
    net = build_nets(sp, delta=0.25)
    assert (net.k_min, net.k_max) == (-1, 1)
    assert [len(net.nets[k]) for k in net.levels] == [1, 2, 4]
    tree = build_tree(sp, net)
    assert {a: m.tolist() for a, m in tree.cubes[0].items()} == {0: [0, 1], 3: [2, 3]}
    assert len(tree.wavelet_family) == 3
    assert check_tree(sp, tree)["holds"]


def test_assignment_matches_reference():
    for sp in (build_space(coords=[0.0, 1.0, 2.0, 3.0]), random_cloud(40, seed=4), binary_line()):
        net = build_nets(sp, delta=0.25)
        tree = build_tree(sp, net)
        ref = ancestry_labels(sp, net.nets, net.k_min, net.k_max)
        for k in net.levels:
            assert tree.labels[k].tolist() == ref[k]


def test_two_clusters():
    sp = build_space(coords=[0.0, 1.0, 100.0, 101.0])
    net = build_nets(sp)
    assert len(net.nets[net.k_min]) == 1
    assert net.delta ** net.k_min >= 101
    # the two clusters split at the first level whose covering radius is below 100
    split = min(k for k in net.levels if len(net.nets[k]) > 1)
    assert net.delta ** split < 100 <= net.delta ** (split - 1)


def test_net_parameter_validation():
    sp = line_space(4)
    with pytest.raises(NetError):
        build_nets(sp, delta=1.0)
    with pytest.raises(NetError):
        build_nets(sp, c0=2.0, C0=1.0)


def test_partition_masses():
    sp = build_space(coords=np.random.default_rng(1).uniform(size=(30, 2)),
                     weights=np.random.default_rng(2).uniform(0.5, 3, 30))
    tree = build_tree(sp, build_nets(sp))
    for k in tree.net.levels:
        assert math.fsum(tree.masses[k].values()) == pytest.approx(sp.total_mass, rel=1e-14)


def test_wavelet_family_counts_and_lengths():
    sp = build_space(coords=[0.0, 1.0, 2.0, 3.0])
    tree = build_tree(sp, build_nets(sp, delta=0.25))
    total = 0
    for k in range(tree.k_min, tree.k_max):
        total += len(tree.net.nets[k + 1]) - len(tree.net.nets[k])
    assert total == len(tree.wavelet_family) == 3
    for c in tree.wavelet_family:
        assert c.ell == pytest.approx(tree.delta * tree.delta ** c.level)
        assert c.alpha in tree.cubes[c.cube_level]


def test_two_point_space_has_one_wavelet():
    sp = build_space(coords=[0.0, 1.0])
    tree = build_tree(sp, build_nets(sp))
    assert len(tree.wavelet_family) == 1
    assert len(tree.net.nets[tree.k_min]) == 1


def test_refinement():
    sp = binary_line()
    tree = build_tree(sp, build_nets(sp, delta=0.25))
    assert [len(tree.net.nets[k]) for k in tree.net.levels] == [1, 2, 4, 8]
    for j0 in (1, 2):
        table = refine(tree, j0)
        for (k, a), subs in table.items():
            if k + j0 <= tree.k_max:
                assert len(subs) == 2 ** j0
            fine = min(k + j0, tree.k_max)
            mass = math.fsum(tree.masses[fine][b] for b in subs)
            assert mass == tree.masses[k][a]
    assert max_refinement_count(tree) == 4
    with pytest.raises(ValueError):
        refine(tree, 0)
    table = refine(tree, 1)
    for (k, a), subs in table.items():
        if k < tree.k_max:
            assert subs == sorted(tree.children[(k, a)])


def test_reference_points():
    sp = line_space(16)
    tree = build_tree(sp, build_nets(sp))
    for k in range(tree.k_min, tree.k_max):
        d = distance_to_reference(sp, tree, k)
        assert np.all(d[tree.y_set(k)] == 0)
    assert np.all(np.isinf(distance_to_reference(sp, tree, tree.k_max)))


def test_tree_export_roundtrip_fields():
    sp = line_space(8)
    tree = build_tree(sp, build_nets(sp))
    doc = tree_to_dict(tree)
    assert doc["k_min"] == tree.k_min and doc["k_max"] == tree.k_max
    assert len(doc["levels"]) == tree.k_max - tree.k_min + 1
    assert len(doc["wavelet_cubes"]) == len(tree.wavelet_family)


@pytest.mark.parametrize("space", [line_space(64), random_cloud(100, seed=0)],
                         ids=["line64", "cloud100"])
def test_cube_properties_with_sharp_constants(space):
    tree = build_tree(space, build_nets(space))
    res = check_tree(space, tree, c_inner=1 / 3, c_outer=2)
    assert res["holds"], res


def test_check_tree_detects_broken_partition():
    sp = line_space(8)
    tree = build_tree(sp, build_nets(sp))
    k = tree.k_min + 1
    a, b = sorted(tree.cubes[k])[:2]
    tree.cubes[k][a] = np.concatenate([tree.cubes[k][a], tree.cubes[k][b][:1]])
    assert not check_tree(sp, tree)["iii"]


def test_families():
    sp = line_space(16)
    tree = build_tree(sp, build_nets(sp))
    hom = CubeFamily.homogeneous(tree)
    assert np.all(hom.scale_level == hom.cube_level - 1)
    inh = CubeFamily.inhomogeneous(tree)
    n_top = len(tree.cubes[tree.k_min])
    assert inh.is_scaling.sum() == n_top
    assert np.all(inh.scale_level == inh.cube_level)
    with pytest.raises(ValueError):
        CubeFamily.inhomogeneous(tree, tree.k_max + 1)
    sub = hom.subset(hom.cube_level <= tree.k_max - 1)
    assert len(sub) == int((hom.cube_level <= tree.k_max - 1).sum())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 40), st.sampled_from([0.125, 0.25, 0.2]))
def test_random_clouds_satisfy_cube_properties(seed, n, delta):
    sp = random_cloud(n, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tree = build_tree(sp, build_nets(sp, delta=delta))
    res = check_tree(sp, tree)
    assert res["holds"], res
    assert len(tree.wavelet_family) == n - 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.integers(3, 25))
def test_nesting_of_cubes(seed, n):
    sp = random_cloud(n, seed=seed, scale=3.0)
    tree = build_tree(sp, build_nets(sp))
    for k in range(tree.k_min, tree.k_max):
        for b, members in tree.cubes[k + 1].items():
            parent = tree.labels[k][b]
            assert set(members.tolist()) <= set(tree.cubes[k][parent].tolist())
