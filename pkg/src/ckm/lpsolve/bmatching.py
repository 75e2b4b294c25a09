"""Min-cost bipartite b-matching by successive shortest paths with node potentials."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BMatchingInfeasible(ValueError):
    pass


@dataclass
class BMatchingProblem:
    """Left nodes ship integer ``supplies``; right nodes absorb up to ``capacities``.

    ``cost[l, r] = inf`` forbids the pair. ``required`` defaults to the total supply.
    """
    supplies: np.ndarray
    capacities: np.ndarray
    cost: np.ndarray
    required: int = None

    def __post_init__(self):
        self.supplies = np.asarray(self.supplies, dtype=np.int64)
        self.capacities = np.asarray(self.capacities, dtype=np.int64)
        self.cost = np.asarray(self.cost, dtype=float).reshape(len(self.supplies), len(self.capacities))
        if self.required is None:
            self.required = int(self.supplies.sum())
        if np.any(self.supplies < 0) or np.any(self.capacities < 0):
            raise ValueError("supplies and capacities must be nonnegative")


@dataclass
class BMatching:
    flow: np.ndarray
    cost: float


def min_cost_b_matching(prob: BMatchingProblem) -> BMatching:
    nl, nr = len(prob.supplies), len(prob.capacities)
    if prob.capacities.sum() < prob.required or prob.supplies.sum() < prob.required:
        raise BMatchingInfeasible("total capacity or supply below the required flow")
    c = prob.cost
    allowed = np.isfinite(c)
    flow = np.zeros((nl, nr), dtype=np.int64)
    left_used = np.zeros(nl, dtype=np.int64)
    right_used = np.zeros(nr, dtype=np.int64)
    # Potentials on left and right nodes; the source stays at 0. Starting every
    # right node at its cheapest incoming cost keeps reduced costs nonnegative
    # even when some costs are negative.
    pot_l = np.zeros(nl)
    pot_r = np.where(allowed.any(axis=0), np.where(allowed, c, np.inf).min(axis=0, initial=np.inf), 0.0)
    shipped = 0
    while shipped < prob.required:
        # Dijkstra over left/right nodes; entry from the source into any left
        # node with spare supply at reduced cost -pot_l.
        dist_l = np.where(left_used < prob.supplies, -pot_l, np.inf)
        dist_r = np.full(nr, np.inf)
        prev_r = np.full(nr, -1)      # left node feeding each right node
        prev_l = np.full(nl, -1)      # right node feeding each left node (backward arc)
        done_l = np.zeros(nl, dtype=bool)
        done_r = np.zeros(nr, dtype=bool)
        while True:
            cand_l = np.where(done_l, np.inf, dist_l)
            cand_r = np.where(done_r, np.inf, dist_r)
            il, ir = int(np.argmin(cand_l)), int(np.argmin(cand_r))
            if not np.isfinite(cand_l[il]) and not np.isfinite(cand_r[ir]):
                break
            if cand_l[il] <= cand_r[ir]:
                done_l[il] = True
                red = c[il] + pot_l[il] - pot_r
                nd = dist_l[il] + red
                better = allowed[il] & ~done_r & (nd < dist_r - 1e-15)
                dist_r[better] = nd[better]
                prev_r[better] = il
            else:
                done_r[ir] = True
                back = flow[:, ir] > 0
                red = -c[:, ir] + pot_r[ir] - pot_l
                nd = dist_r[ir] + red
                better = back & ~done_l & (nd < dist_l - 1e-15)
                dist_l[better] = nd[better]
                prev_l[better] = ir
        sink_ok = (right_used < prob.capacities) & np.isfinite(dist_r)
        if not sink_ok.any():
            raise BMatchingInfeasible(f"only {shipped} of {prob.required} units can be routed")
        end = int(np.argmin(np.where(sink_ok, dist_r + pot_r, np.inf)))
        # Trace the augmenting path and its bottleneck.
        path = []
        r = end
        bottleneck = int(prob.capacities[r] - right_used[r])
        while True:
            l = int(prev_r[r])
            path.append((l, r))
            if prev_l[l] < 0:
                start = l
                bottleneck = min(bottleneck, int(prob.supplies[l] - left_used[l]))
                break
            r = int(prev_l[l])
            bottleneck = min(bottleneck, int(flow[l, r]))
            path.append((l, -1 - r))
        bottleneck = min(bottleneck, prob.required - shipped)
        for l, r in path:
            if r >= 0:
                flow[l, r] += bottleneck
            else:
                flow[l, -1 - r] -= bottleneck
        left_used[start] += bottleneck
        right_used[end] += bottleneck
        shipped += bottleneck
        fin_l, fin_r = np.isfinite(dist_l), np.isfinite(dist_r)
        pot_l[fin_l] += dist_l[fin_l]
        pot_r[fin_r] += dist_r[fin_r]
    cost = float((np.where(flow > 0, c, 0.0) * flow).sum())
    return BMatching(flow, cost)
