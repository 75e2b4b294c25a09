"""Greedy client representatives and the Voronoi partition of facilities around them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basiclp import CostShares, FractionalSolution
from .constants import CLUSTER_RADIUS
from .instance import Instance
from .report import CheckReport, within


@dataclass
class Clustering:
    reps: list          # client ids in selection order
    U: dict             # rep -> sorted list of facility ids
    owner: np.ndarray   # facility -> rep

    def weight(self, frac: FractionalSolution, reps) -> float:
        """y(U_J) for a collection of representatives J."""
        return float(sum(frac.y[self.U[v]].sum() for v in reps))

    def facilities_of(self, reps) -> list:
        return sorted(i for v in reps for i in self.U[v])


def select_representatives(inst: Instance, shares: CostShares) -> list:
    """Repeatedly take the remaining client with least d_av and drop its 4 d_av-neighbourhood."""
    cc = inst.cc()
    d_av = shares.d_av
    remaining = np.ones(inst.n_clients, dtype=bool)
    reps = []
    while remaining.any():
        cand = np.flatnonzero(remaining)
        v = int(cand[np.argmin(d_av[cand])])  # argmin keeps the lowest index on ties
        reps.append(v)
        remaining &= ~(cc[:, v] <= CLUSTER_RADIUS * d_av)
        remaining[v] = False
    return reps


def voronoi_partition(inst: Instance, reps) -> Clustering:
    if not reps:
        raise ValueError("need at least one representative")
    d = inst.fc()[:, reps]
    nearest = np.argmin(d, axis=1)  # first minimum = earliest representative
    owner = np.array([reps[t] for t in nearest], dtype=np.int64)
    U = {v: [int(i) for i in np.flatnonzero(owner == v)] for v in reps}
    return Clustering(list(reps), U, owner)


def cluster(inst: Instance, shares: CostShares) -> Clustering:
    return voronoi_partition(inst, select_representatives(inst, shares))


def check_cluster_properties(inst: Instance, frac: FractionalSolution, shares: CostShares,
                  clus: Clustering) -> CheckReport:
    """Separation, coverage, half-unit weight and the facility/rep distance bound."""
    cc, fc, d_av = inst.cc(), inst.fc(), shares.d_av
    reps = clus.reps
    rep = CheckReport()
    sep = []
    for a in range(len(reps)):
        for b in range(a + 1, len(reps)):
            v, w = reps[a], reps[b]
            if not cc[v, w] > CLUSTER_RADIUS * max(d_av[v], d_av[w]):
                sep.append((v, w, float(cc[v, w])))
    rep.add("rep_separation", sep)
    cover = []
    for j in inst.clients:
        if not any(d_av[v] <= d_av[j] and cc[v, j] <= CLUSTER_RADIUS * d_av[j] for v in reps):
            cover.append(j)
    rep.add("client_coverage", cover)
    rep.add("cluster_half_weight", [(v, clus.weight(frac, [v])) for v in reps
                                 if not within(0.5, clus.weight(frac, [v]))])
    far = []
    # largest d(i, v) - d(i, j) - 4 d_av(j) over j, per facility
    for v in reps:
        for i in clus.U[v]:
            gap = fc[i, v] - fc[i, :] - CLUSTER_RADIUS * d_av
            j = int(np.argmax(gap))
            if not within(fc[i, v], fc[i, j] + CLUSTER_RADIUS * d_av[j]):
                far.append((v, i, j))
    rep.add("facility_rep_distance", far)
    return rep


def check_partition(inst: Instance, clus: Clustering) -> CheckReport:
    rep = CheckReport()
    members = sorted(i for v in clus.reps for i in clus.U[v])
    rep.add("partition_covers_facilities", [] if members == list(inst.facilities) else [members])
    rep.add("owner_consistent", [i for v in clus.reps for i in clus.U[v] if clus.owner[i] != v])
    return rep


def cluster_moving_cost(inst: Instance, frac: FractionalSolution, clus: Clustering, v) -> float:
    """sum over i in U_v of x_{i,C} d(i, v)."""
    U = clus.U[v]
    return float(frac.x[U].sum(axis=1) @ inst.fc()[U, v])


def check_moving_bounds(inst: Instance, frac: FractionalSolution, shares: CostShares,
                        clus: Clustering) -> CheckReport:
    """Per-cluster bound D(U_v) + 4 D'(U_v), and its sum against 5 LP."""
    rep = CheckReport()
    fails, total = [], 0.0
    for v in clus.reps:
        lhs = cluster_moving_cost(inst, frac, clus, v)
        rhs = shares.D[clus.U[v]].sum() + CLUSTER_RADIUS * shares.Dprime[clus.U[v]].sum()
        total += lhs
        if not within(lhs, rhs):
            fails.append((v, lhs, float(rhs)))
    rep.add("cluster_moving_bound", fails)
    bound = (1 + CLUSTER_RADIUS) * frac.lp_value
    rep.add("total_moving_five_lp", [] if within(total, bound) else [(total, bound)])
    return rep
