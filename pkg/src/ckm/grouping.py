"""Grouping representatives with a colored minimum spanning tree.

Kruskal's algorithm runs over the representatives; each accepted edge is
colored when it merges two groups: black if both groups are small (weight
below ell), grey if exactly one is small (directed from the small side), white
if both are big. Black components become the nodes of a forest whose edges are
the grey ones, and each tree of that forest is split greedily into subtrees
whose non-root parts weigh between ell and 2 ell.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

from .basiclp import FractionalSolution
from .cluster import Clustering
from .instance import Instance
from .report import CheckReport, within

BLACK, GREY, WHITE = "black", "grey", "white"
# weights are sums of LP values; compare against ell with this slack
WEIGHT_TOL = 1e-9


def is_big(weight, ell):
    return weight >= ell - WEIGHT_TOL


@dataclass
class MstEdge:
    u: int
    v: int
    length: float
    color: str
    # for grey edges: tail lies in the small group, head in the big one
    tail: int = None
    head: int = None


@dataclass
class ColoredMst:
    reps: list
    weights: dict      # rep -> y(U_v)
    ell: float
    edges: list        # Kruskal insertion order


@dataclass
class Node:
    id: int
    members: list      # representatives, sorted
    weight: float
    black_edges: list = field(default_factory=list)
    parent: int = None
    parent_edge: MstEdge = None
    children: list = field(default_factory=list)
    tree: int = None   # id of the root node of its tree
    depth: int = 0


@dataclass
class ContractedForest:
    nodes: list
    roots: list
    ell: float
    fallback: bool     # total weight below ell: one all-black small root
    cc: np.ndarray = field(repr=False, default=None)

    def members(self, node_ids):
        return sorted(v for p in node_ids for v in self.nodes[p].members)

    def cut_distance(self, p):
        """d(J_p, R minus J_p); infinite when J_p is everything."""
        inside = self.nodes[p].members
        outside = [v for q in self.nodes if q.id != p for v in q.members]
        if not outside:
            return np.inf
        return float(self.cc[np.ix_(inside, outside)].min())


@dataclass
class Subtree:
    root: int
    collected: list    # node ids of P minus its root
    edges: list        # grey edges inside the subtree


@dataclass
class Group:
    nodes: list        # node ids whose representatives form the group
    anchor: int        # node containing the chosen centre representative
    tree: int
    is_root: bool


@dataclass
class GroupDecomposition:
    subtrees: dict     # tree root -> list of Subtree (last one is the remainder)
    groups: list


class _UnionFind:
    def __init__(self, items, weights):
        self.parent = {a: a for a in items}
        self.weight = dict(weights)

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        self.parent[rb] = ra
        self.weight[ra] += self.weight[rb]
        return ra


def rep_weights(clus: Clustering, frac: FractionalSolution) -> dict:
    return {v: float(frac.y[clus.U[v]].sum()) for v in clus.reps}


def build_colored_mst(inst: Instance, clus: Clustering, frac: FractionalSolution, ell) -> ColoredMst:
    reps = list(clus.reps)
    if not reps:
        raise ValueError("no representatives")
    cc = inst.cc()
    weights = rep_weights(clus, frac)
    pairs = sorted((float(cc[a, b]), a, b) for a in reps for b in reps if a < b)
    uf = _UnionFind(reps, weights)
    edges = []
    for length, a, b in pairs:
        ra, rb = uf.find(a), uf.find(b)
        if ra == rb:
            continue
        big_a, big_b = is_big(uf.weight[ra], ell), is_big(uf.weight[rb], ell)
        if not big_a and not big_b:
            edges.append(MstEdge(a, b, length, BLACK))
        elif big_a and big_b:
            edges.append(MstEdge(a, b, length, WHITE))
        elif big_b:
            edges.append(MstEdge(a, b, length, GREY, tail=a, head=b))
        else:
            edges.append(MstEdge(a, b, length, GREY, tail=b, head=a))
        uf.union(ra, rb)
        if len(edges) == len(reps) - 1:
            break
    return ColoredMst(reps, weights, ell, edges)


class GroupingInvariantError(AssertionError):
    pass


def contract(inst: Instance, cmst: ColoredMst, check=True) -> ContractedForest:
    """Black components become nodes, grey edges point to parents, white edges vanish."""
    uf = _UnionFind(cmst.reps, cmst.weights)
    for e in cmst.edges:
        if e.color == BLACK:
            uf.union(e.u, e.v)
    comps = {}
    for v in cmst.reps:
        comps.setdefault(uf.find(v), []).append(v)
    ordered = sorted((sorted(m) for m in comps.values()), key=lambda m: m[0])
    node_of = {}
    nodes = []
    for pid, members in enumerate(ordered):
        nodes.append(Node(pid, members, float(sum(cmst.weights[v] for v in members))))
        for v in members:
            node_of[v] = pid
    for e in cmst.edges:
        if e.color == BLACK:
            nodes[node_of[e.u]].black_edges.append(e)
        elif e.color == GREY:
            child, par = node_of[e.tail], node_of[e.head]
            if nodes[child].parent is not None:
                raise GroupingInvariantError(f"node {child} has two outgoing grey edges")
            nodes[child].parent = par
            nodes[child].parent_edge = e
            nodes[par].children.append(child)
    for p in nodes:
        p.children.sort()
    roots = [p.id for p in nodes if p.parent is None]
    for r in roots:
        stack = [(r, 0)]
        while stack:
            q, depth = stack.pop()
            nodes[q].tree, nodes[q].depth = r, depth
            stack.extend((c, depth + 1) for c in nodes[q].children)
    if any(p.tree is None for p in nodes):
        raise GroupingInvariantError("grey edges contain a cycle")
    total = sum(cmst.weights.values())
    forest = ContractedForest(nodes, roots, cmst.ell, not is_big(total, cmst.ell), inst.cc())
    if check:
        rep = check_forest(forest)
        if not rep.ok:
            raise GroupingInvariantError(f"forest invariants failed: {rep.failed()}")
    return forest


def _subtree_nodes(forest, p, alive):
    out, stack = [], [p]
    while stack:
        q = stack.pop()
        out.append(q)
        stack.extend(c for c in forest.nodes[q].children if alive[c])
    return out


def decompose(forest: ContractedForest, check=True) -> GroupDecomposition:
    ell = forest.ell
    nodes = forest.nodes
    subtrees, groups = {}, []
    alive = np.ones(len(nodes), dtype=bool)
    for r in forest.roots:
        members = _subtree_nodes(forest, r, alive)
        found = []
        while True:
            # weight of alive strict descendants
            desc = {}
            for q in sorted(members, key=lambda q: -nodes[q].depth):
                desc[q] = sum(desc[c] + nodes[c].weight for c in nodes[q].children if alive[c])
            cand = [q for q in members if alive[q] and is_big(desc[q], ell)]
            if not cand:
                break
            p = min(cand, key=lambda q: (-nodes[q].depth, q))
            kids = [c for c in nodes[p].children if alive[c]]
            sub_w = {c: desc[c] + nodes[c].weight for c in kids}
            heavy = [c for c in kids if is_big(sub_w[c], ell)]
            if heavy:
                chosen = heavy[:1]
            else:
                chosen, acc = [], 0.0
                for c in kids:
                    chosen.append(c)
                    acc += sub_w[c]
                    if is_big(acc, ell):
                        break
            collected = []
            for c in chosen:
                collected.extend(_subtree_nodes(forest, c, alive))
            for q in collected:
                alive[q] = False
            collected.sort()
            found.append(Subtree(p, collected, [nodes[q].parent_edge for q in collected]))
            members = [q for q in members if alive[q]]
        rest = sorted(q for q in members if q != r)
        found.append(Subtree(r, rest, [nodes[q].parent_edge for q in rest]))
        subtrees[r] = found
        for T in found:
            if T.collected:
                groups.append(Group(T.collected, T.root, r, False))
        groups.append(Group([r], r, r, True))
    dec = GroupDecomposition(subtrees, groups)
    if check:
        rep = check_decomposition(forest, dec)
        if not rep.ok:
            raise GroupingInvariantError(f"decomposition invariants failed: {rep.failed()}")
    return dec


def build_groups(inst, clus, frac, ell, check=True):
    cmst = build_colored_mst(inst, clus, frac, ell)
    forest = contract(inst, cmst, check=check)
    return cmst, forest, decompose(forest, check=check)


# ---------------------------------------------------------------- checks

def check_mst(inst: Instance, cmst: ColoredMst) -> CheckReport:
    """Spanning, minimum total length (against an independent MST), color rule replayed."""
    rep = CheckReport()
    reps = cmst.reps
    n = len(reps)
    rep.add("mst_edge_count", [] if len(cmst.edges) == n - 1 else [len(cmst.edges)])
    if n > 1:
        sub = inst.cc()[np.ix_(reps, reps)]
        # shift lengths so zero-length edges are not read as missing
        ref = minimum_spanning_tree(sub + 1.0 - np.eye(n)).sum() - (n - 1)
        got = sum(e.length for e in cmst.edges)
        rep.add("mst_total_length", [] if abs(ref - got) <= 1e-9 * max(1.0, ref) else [(got, ref)])
    uf = _UnionFind(reps, cmst.weights)
    bad = []
    for e in cmst.edges:
        ra, rb = uf.find(e.u), uf.find(e.v)
        if ra == rb:
            bad.append((e.u, e.v, "cycle"))
            continue
        sa, sb = not is_big(uf.weight[ra], cmst.ell), not is_big(uf.weight[rb], cmst.ell)
        want = BLACK if sa and sb else WHITE if not (sa or sb) else GREY
        if e.color != want:
            bad.append((e.u, e.v, e.color, want))
        elif want == GREY and (e.tail not in (e.u, e.v) or uf.find(e.tail) != (ra if sa else rb)):
            bad.append((e.u, e.v, "grey direction"))
        uf.union(ra, rb)
    rep.add("edge_color_rule", bad)
    return rep


def check_forest(forest: ContractedForest) -> CheckReport:
    rep = CheckReport()
    nodes = forest.nodes
    ell = forest.ell
    # every grey edge points at the parent, and following parents reaches the root
    toward = []
    for p in nodes:
        q, steps = p, 0
        while q.parent is not None and steps <= len(nodes):
            q, steps = nodes[q.parent], steps + 1
        if q.id != p.tree or q.parent is not None:
            toward.append(p.id)
    rep.add("grey_toward_root", toward)
    sizes = []
    for p in nodes:
        is_root = p.parent is None
        if is_root and not is_big(p.weight, ell) and not forest.fallback:
            sizes.append((p.id, "root small", p.weight))
        if not is_root and is_big(p.weight, ell):
            sizes.append((p.id, "non-root big", p.weight))
    rep.add("root_big_others_small", sizes)
    mono = []
    for p in nodes:
        if p.parent is not None and nodes[p.parent].parent is not None:
            if p.parent_edge.length < nodes[p.parent].parent_edge.length - 1e-12:
                mono.append((p.id, p.parent))
    rep.add("grey_lengths_nonincreasing", mono)
    cut, black = [], []
    for p in nodes:
        dist = forest.cut_distance(p.id)
        if p.parent is not None and abs(p.parent_edge.length - dist) > 1e-9 * max(1.0, dist):
            cut.append((p.id, p.parent_edge.length, dist))
        for e in p.black_edges:
            if not within(e.length, dist):
                black.append((p.id, e.u, e.v, e.length, dist))
    rep.add("grey_edge_is_cut_distance", cut)
    # black-edge bound, stated for every component and implied for non-roots
    rep.add("black_edges_within_cut_distance", black)
    members = sorted(v for p in nodes for v in p.members)
    rep.add("nodes_partition_reps", [] if len(members) == len(set(members)) else [members])
    return rep


def check_decomposition(forest: ContractedForest, dec: GroupDecomposition) -> CheckReport:
    rep = CheckReport()
    nodes = forest.nodes
    ell = forest.ell
    once, count, size, weight, dichotomy = [], [], [], [], []
    for r, found in dec.subtrees.items():
        tree_nodes = [p.id for p in nodes if p.tree == r]
        seen = [q for T in found for q in T.collected]
        if sorted(seen) != sorted(q for q in tree_nodes if q != r):
            once.append((r, sorted(seen)))
        tree_weight = sum(nodes[q].weight for q in tree_nodes)
        if not forest.fallback and not within(len(found), tree_weight / ell):
            count.append((r, len(found), tree_weight))
        for T in found:
            verts = len(forest.members([T.root] + T.collected))
            if verts > 8 * ell:
                size.append((r, T.root, verts))
        for T in found[:-1]:
            w = sum(nodes[q].weight for q in T.collected)
            if not (is_big(w, ell) and within(w, 2 * ell)):
                weight.append((r, T.root, w))
        root = nodes[r]
        if not (within(root.weight, 2 * ell) or len(root.members) == 1):
            dichotomy.append((r, root.weight, len(root.members)))
    rep.add("nonroot_nodes_once", once)
    rep.add("subtree_count", count)
    rep.add("subtree_size", size)
    rep.add("group_weight_range", weight)
    rep.add("root_weight_dichotomy", dichotomy)
    grouped = sorted(v for g in dec.groups for v in forest.members(g.nodes))
    all_reps = sorted(v for p in nodes for v in p.members)
    rep.add("groups_partition_reps", [] if grouped == all_reps else [grouped])
    return rep
