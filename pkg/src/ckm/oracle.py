"""Brute-force ground truth and a one-shot audit of every pipeline invariant."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .basiclp import CostShares, FractionalSolution
from .cluster import Clustering, check_cluster_properties, check_moving_bounds, check_partition
from .configlp import preassign_properties
from .constants import FEAS_TOL, cardinality_bound
from .grouping import check_decomposition, check_forest, check_mst
from .instance import Instance
from .lpsolve import BMatchingInfeasible, BMatchingProblem, min_cost_b_matching
from .report import CheckReport, within
from .round import check_config_rounding

EXACT_BUDGET = 200_000
SWEEP_MAX_REPS = 8
VERTEX_MAX_FRACTIONAL = 2


class OracleBudgetError(RuntimeError):
    """The multiset enumeration would exceed the configured budget."""


@dataclass
class ExactResult:
    opt_cost: float
    opt_open: dict           # facility -> copies
    assignment: np.ndarray   # client -> facility
    multisets: int           # how many multisets were evaluated


def _multisets(n, total, cap):
    """Copy vectors over n facilities summing to ``total`` with entries <= cap, lexicographic."""
    if n == 0:
        if total == 0:
            yield ()
        return
    for c in range(min(cap, total), -1, -1):
        for rest in _multisets(n - 1, total - c, cap):
            yield (c,) + rest


def count_multisets(n, total, cap):
    """Number of vectors in ``_multisets(n, total, cap)`` by inclusion-exclusion."""
    out = 0
    for t in range(n + 1):
        rem = total - t * (cap + 1)
        if rem < 0:
            break
        out += (-1) ** t * math.comb(n, t) * math.comb(rem + n - 1, n - 1)
    return out


def exact_opt(inst: Instance, k_override=None, max_copies=None, budget=EXACT_BUDGET) -> ExactResult:
    """Optimal CKM solution over all ways to open k copies (at most ``max_copies`` per facility).

    ``max_copies`` defaults to k, which makes capacities soft. Opening more copies
    never raises the optimal assignment cost, so exactly min(k, nF * max_copies)
    copies are enumerated.
    """
    k = inst.k if k_override is None else int(k_override)
    cap = k if max_copies is None else int(max_copies)
    if k < 1 or cap < 1:
        raise ValueError("k and max_copies must be positive")
    nf = inst.n_facilities
    total = min(k, nf * cap)
    n_sets = count_multisets(nf, total, cap)
    if n_sets > budget:
        raise OracleBudgetError(f"{n_sets} multisets exceed the budget of {budget}")
    fc = inst.fc()
    demand = np.ones(inst.n_clients)
    best = None
    for copies in _multisets(nf, total, cap):
        fac = [i for i in range(nf) if copies[i] > 0]
        caps = np.array([copies[i] * int(inst.capacities[i]) for i in fac], dtype=np.int64)
        if caps.sum() < inst.n_clients:
            continue
        try:
            res = min_cost_b_matching(BMatchingProblem(demand, caps, fc[fac].T))
        except BMatchingInfeasible:
            continue
        if best is None or res.cost < best[0] - 1e-12:
            assignment = np.full(inst.n_clients, -1, dtype=np.int64)
            for c, t in zip(*np.nonzero(res.flow)):
                assignment[c] = fac[t]
            best = (float(res.cost), {i: copies[i] for i in fac}, assignment)
    if best is None:
        raise ValueError("no way to open k copies holds every client")
    return ExactResult(best[0], best[1], best[2], n_sets)


# --------------------------------------------------------------------- audit

@dataclass
class PipelineBundle:
    """Artifacts of one run of both roundings on the same fractional point."""
    inst: Instance
    frac: FractionalSolution
    shares: CostShares
    clustering: Clustering
    basic_solution: object = None
    basic_trace: object = None
    config_solution: object = None
    config_trace: object = None


def rep_cut_distance(cc, J, rest) -> float:
    return float(cc[np.ix_(J, rest)].min())


def check_cut_distance_sweep(inst: Instance, frac: FractionalSolution, shares: CostShares,
                             clus: Clustering, max_reps=SWEEP_MAX_REPS) -> CheckReport:
    """d(J, R - J) * pi(J) <= 4 D(U_J) + 10 D'(U_J) for every proper nonempty J of R.

    Skipped (reported as a witness-free pass) when R has more than ``max_reps`` members.
    """
    rep = CheckReport()
    reps = clus.reps
    fails = []
    if len(reps) <= max_reps:
        cc = inst.cc()
        for size in range(1, len(reps)):
            for J in itertools.combinations(reps, size):
                rest = [v for v in reps if v not in J]
                B = clus.facilities_of(J)
                xb = frac.x[B].sum(axis=0)
                pi = float((xb * (1.0 - xb)).sum())
                lhs = rep_cut_distance(cc, list(J), rest) * pi
                rhs = 4 * shares.D[B].sum() + 10 * shares.Dprime[B].sum()
                if not within(lhs, rhs):
                    fails.append((J, lhs, float(rhs)))
    rep.add("cut_distance_sweep", fails)
    return rep


def check_basic_rounding(bundle: PipelineBundle) -> CheckReport:
    inst, frac, sol = bundle.inst, bundle.frac, bundle.basic_solution
    rep = CheckReport()
    rep.add("basic_capacity_respected", sol.violations(inst))
    rep.add("basic_opened_at_most_4k",
            [] if sol.opened_total <= 4 * inst.k else [(sol.opened_total, 4 * inst.k)])
    rep.add("basic_cost_at_most_11_lp",
            [] if within(sol.cost, 11 * frac.lp_value) else [(sol.cost, 11 * frac.lp_value)])
    if bundle.basic_trace is not None:
        rep.add("basic_vertex_solutions", [(s.label, s.fractional) for s in bundle.basic_trace.solves
                                           if s.fractional > VERTEX_MAX_FRACTIONAL])
    return rep


def check_group_witnesses(bundle: PipelineBundle) -> CheckReport:
    """Recompute each group's witness from the fractional point and test it in the demand LP."""
    inst, frac, trace = bundle.inst, bundle.frac, bundle.config_trace
    forest, clus = trace.forest, trace.clustering
    fixed = set()
    for pre in trace.preassignments.values():
        fixed.update(pre.assignment)
    free = np.array([j not in fixed for j in inst.clients])
    x_all, x_free = frac.x.sum(axis=1), frac.x[:, free].sum(axis=1)
    fails = []
    for gr in trace.groups:
        U = gr.facilities
        witness = np.zeros(inst.n_facilities)
        for p in gr.nodes:
            Up = clus.facilities_of(forest.nodes[p].members)
            tot = x_all[Up].sum()
            witness[Up] = (x_free[Up].sum() / tot if tot > 0 else 0.0) * x_all[Up]
        w = witness[U]
        caps = inst.capacities[U].astype(float)
        ok = (np.all(w >= -FEAS_TOL) and np.all(w <= caps + FEAS_TOL)
              and abs(w.sum() - gr.demand) <= FEAS_TOL * max(1.0, gr.demand)
              and within(float((w / caps).sum()) + gr.preopened, gr.budget))
        if not ok:
            fails.append((gr.nodes, float(w.sum()), gr.demand))
    return CheckReport().add("group_witness_feasible", fails)


def check_config_artifacts(bundle: PipelineBundle) -> CheckReport:
    inst, frac, sol, trace = bundle.inst, bundle.frac, bundle.config_solution, bundle.config_trace
    rep = CheckReport()
    rep.merge(check_mst(inst, trace.cmst))
    rep.merge(check_forest(trace.forest))
    rep.merge(check_decomposition(trace.forest, trace.decomposition))
    rep.merge(check_group_witnesses(bundle))
    bad_pre = []
    for node, pre in trace.preassignments.items():
        xb = frac.x[pre.B].sum(axis=0)
        pi = float((xb * (1.0 - xb)).sum())
        props, _ = preassign_properties(inst, frac, pre.B, pi, pre.S, pre.assignment,
                                        trace.ell, trace.ell2)
        if not all(props.values()):
            bad_pre.append((node, [k for k, v in props.items() if not v]))
    rep.add("preassign_properties", bad_pre)
    rep.add("config_vertex_solutions", [(s.label, s.fractional) for s in trace.solves
                                        if s.fractional > VERTEX_MAX_FRACTIONAL])
    bound = cardinality_bound(inst.k, trace.ell)
    rep.add("config_cardinality", [] if sol.opened_total <= bound else [(sol.opened_total, bound)])
    rep.merge(check_config_rounding(inst, frac, sol, trace))
    return rep


def audit(bundle: PipelineBundle) -> CheckReport:
    """Every executable invariant that applies to the artifacts present in ``bundle``."""
    inst, frac, shares, clus = bundle.inst, bundle.frac, bundle.shares, bundle.clustering
    rep = CheckReport()
    rep.add("fractional_feasible", [] if frac.constraint_violation(inst) <= FEAS_TOL
            else [frac.constraint_violation(inst)])
    rep.merge(check_partition(inst, clus))
    rep.merge(check_cluster_properties(inst, frac, shares, clus))
    rep.merge(check_moving_bounds(inst, frac, shares, clus))
    rep.merge(check_cut_distance_sweep(inst, frac, shares, clus))
    if bundle.basic_solution is not None:
        rep.merge(check_basic_rounding(bundle))
    if bundle.config_solution is not None and bundle.config_trace is not None:
        rep.merge(check_config_artifacts(bundle))
    return rep
