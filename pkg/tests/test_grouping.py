import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckm.basiclp import FractionalSolution, cost_shares, solve_basic
from ckm.cluster import Clustering, cluster
from ckm.grouping import (BLACK, GREY, WHITE, build_colored_mst, build_groups,
                          check_decomposition, check_forest, check_mst, contract, decompose)
from ckm.instance import Instance, gen_gap_instance, gen_suite_instance


def synthetic(points_metric, weights):
    """Every client v has its own co-located facility v carrying weight weights[v]."""
    D = np.asarray(points_metric, dtype=float)
    n = len(D)
    dist = np.block([[D, D], [D, D]])
    inst = Instance(np.full(n, n), n, dist, 1)
    clus = Clustering(list(range(n)), {v: [v] for v in range(n)}, np.arange(n))
    frac = FractionalSolution(np.eye(n), np.asarray(weights, dtype=float), 0.0)
    return inst, clus, frac


def star_metric(n_leaves):
    D = np.full((n_leaves + 1, n_leaves + 1), 2.0)
    D[0, :] = D[:, 0] = 1.0
    np.fill_diagonal(D, 0.0)
    return D


def naive_colors(D, weights, ell):
    """Independent Kruskal: explicit group sets, colours decided at merge time."""
    n = len(D)
    groups = [{v} for v in range(n)]
    out = []
    for length, a, b in sorted((D[a][b], a, b) for a in range(n) for b in range(a + 1, n)):
        ga = next(g for g in groups if a in g)
        gb = next(g for g in groups if b in g)
        if ga is gb:
            continue
        big_a = sum(weights[v] for v in ga) >= ell - 1e-9
        big_b = sum(weights[v] for v in gb) >= ell - 1e-9
        out.append((a, b, BLACK if not (big_a or big_b) else WHITE if big_a and big_b else GREY))
        groups.remove(gb)
        ga |= gb
    return out


def test_single_rep_has_no_edges():
    inst, clus, frac = synthetic([[0.0]], [0.7])
    cmst, forest, dec = build_groups(inst, clus, frac, 2)
    assert cmst.edges == [] and len(forest.nodes) == 1 and len(dec.groups) == 1


def test_two_big_reps_white_edge_two_roots():
    inst, clus, frac = synthetic([[0, 3], [3, 0]], [2.5, 2.0])
    cmst, forest, dec = build_groups(inst, clus, frac, 2)
    assert [e.color for e in cmst.edges] == [WHITE]
    assert forest.roots == [0, 1] and not forest.fallback
    assert [g.nodes for g in dec.groups] == [[0], [1]]


def test_huge_ell_single_black_component():
    D = star_metric(4)
    inst, clus, frac = synthetic(D, [0.5] * 5)
    cmst, forest, dec = build_groups(inst, clus, frac, 100)
    assert all(e.color == BLACK for e in cmst.edges)
    assert len(forest.nodes) == 1 and forest.roots == [0] and forest.fallback
    assert [g.nodes for g in dec.groups] == [[0]]


@pytest.mark.parametrize("m", [1, 2, 3])
def test_star_splits_into_pairs(m):
    ell, delta = 2.0, 0.1
    D = star_metric(2 * m)
    inst, clus, frac = synthetic(D, [ell] + [ell / 2 + delta] * (2 * m))
    cmst, forest, dec = build_groups(inst, clus, frac, ell)
    assert all(e.color == GREY and e.head == 0 for e in cmst.edges)
    found = dec.subtrees[0]
    assert [T.collected for T in found[:-1]] == [[2 * t + 1, 2 * t + 2] for t in range(m)]
    assert found[-1].collected == []
    assert [g.nodes for g in dec.groups] == [[2 * t + 1, 2 * t + 2] for t in range(m)] + [[0]]


def test_gap_instance_trace_with_ell_two():
    inst = gen_gap_instance(3, 100)
    frac = solve_basic(inst)
    clus = cluster(inst, cost_shares(inst, frac))
    assert clus.reps == [0, 4, 8]
    cmst, forest, dec = build_groups(inst, clus, frac, 2)
    assert [(e.u, e.v, e.color) for e in cmst.edges] == [(0, 4, BLACK), (0, 8, GREY)]
    assert (cmst.edges[1].tail, cmst.edges[1].head) == (8, 0)
    assert [p.members for p in forest.nodes] == [[0, 4], [8]]
    assert forest.nodes[1].parent == 0 and forest.roots == [0]


@pytest.mark.parametrize("seed", range(1, 51))
def test_suite_instances_pass_all_checks(seed):
    inst = gen_suite_instance(seed)
    frac = solve_basic(inst)
    clus = cluster(inst, cost_shares(inst, frac))
    for ell in (1, 2, 5):
        cmst, forest, dec = build_groups(inst, clus, frac, ell)
        for rep in (check_mst(inst, cmst), check_forest(forest), check_decomposition(forest, dec)):
            assert rep.ok, rep.failed()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10 ** 6), st.sampled_from([1.0, 2.0, 3.0]))
def test_random_points_and_weights(n, seed, ell):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, size=(n, 2))
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(axis=2))
    weights = rng.uniform(0.5, 2.5, size=n)
    inst, clus, frac = synthetic(D, weights)
    cmst = build_colored_mst(inst, clus, frac, ell)
    assert [(e.u, e.v, e.color) for e in cmst.edges] == naive_colors(D, weights, ell)
    forest = contract(inst, cmst)
    dec = decompose(forest)
    grouped = sorted(v for g in dec.groups for v in forest.members(g.nodes))
    assert grouped == list(range(n))
    # greedily collected subtrees weigh [ell, 2 ell]; the remainder (last) is lighter than ell
    for found in dec.subtrees.values():
        for T in found[:-1]:
            w = sum(forest.nodes[p].weight for p in T.collected)
            assert ell - 1e-9 <= w <= 2 * ell + 1e-9
        assert sum(forest.nodes[p].weight for p in found[-1].collected) < ell + 1e-9


def test_corrupted_forest_is_reported():
    inst, clus, frac = synthetic(star_metric(2), [2.0, 0.6, 0.6])
    forest = contract(inst, build_colored_mst(inst, clus, frac, 2.0))
    forest.nodes[1].weight = 5.0  # a non-root node that now looks big
    assert "root_big_others_small" in check_forest(forest).failed()
