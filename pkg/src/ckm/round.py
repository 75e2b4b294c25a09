"""The two roundings, the demand-moving LP, final assignment and the cutting-plane driver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basiclp import Cut, FractionalSolution, cost_shares, solve_basic
from .cluster import Clustering, cluster
from .configlp import (build_config_system, check_feasible, is_concentrated, preassign)
from .constants import (CERT_TOL, FEAS_TOL, MAX_COPIES, cardinality_bound, ell1_for,
                        ell2_for, ell_for_epsilon)
from .grouping import build_groups
from .instance import Instance
from .lpsolve import (EQ, LE, BMatchingInfeasible, BMatchingProblem, LinearProgram,
                      LpNumericalError, fractional_count, min_cost_b_matching, solve_lp)
from .report import CheckReport, within

OPEN_TOL = 1e-9
SOLUTION_HEADER = "ckm-sol v1"


class RoundingError(RuntimeError):
    """An internal guarantee of a rounding failed; the message names the group."""


class CuttingPlaneExhausted(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class IntegralSolution:
    open: dict                 # facility -> copies (1 or 2)
    assignment: np.ndarray     # client -> facility
    cost: float

    @property
    def opened_total(self) -> int:
        return int(sum(self.open.values()))

    def violations(self, inst: Instance) -> list:
        out = []
        if len(self.assignment) != inst.n_clients:
            out.append("assignment does not cover every client")
        load = np.bincount(self.assignment, minlength=inst.n_facilities)
        for i in range(inst.n_facilities):
            copies = self.open.get(i, 0)
            if not 0 <= copies <= MAX_COPIES:
                out.append(f"facility {i} opened {copies} times")
            if load[i] > copies * inst.capacities[i]:
                out.append(f"facility {i} serves {load[i]} > {copies} x {inst.capacities[i]}")
        cost = float(inst.fc()[self.assignment, np.arange(inst.n_clients)].sum())
        if abs(cost - self.cost) > 1e-9 * max(1.0, cost):
            out.append(f"stated cost {self.cost} differs from {cost}")
        return out


def final_assignment(inst: Instance, opened: dict, fixed=None):
    """Min-cost assignment of the clients not in ``fixed`` to the residual capacity."""
    fixed = dict(fixed or {})
    fac = sorted(i for i, c in opened.items() if c > 0)
    residual = np.array([opened[i] * int(inst.capacities[i]) for i in fac], dtype=np.int64)
    pos = {i: t for t, i in enumerate(fac)}
    for j, i in fixed.items():
        if i not in pos:
            raise RoundingError(f"client {j} fixed to unopened facility {i}")
        residual[pos[i]] -= 1
    if np.any(residual < 0):
        raise RoundingError("fixed clients exceed the capacity of their facility")
    free = [j for j in inst.clients if j not in fixed]
    assignment = np.full(inst.n_clients, -1, dtype=np.int64)
    for j, i in fixed.items():
        assignment[j] = i
    if free:
        cost = inst.fc()[np.ix_(fac, free)].T
        try:
            res = min_cost_b_matching(BMatchingProblem(np.ones(len(free)), residual, cost))
        except BMatchingInfeasible as exc:
            raise RoundingError(f"opened capacity cannot hold the free clients: {exc}") from None
        for c, t in zip(*np.nonzero(res.flow)):
            assignment[free[c]] = fac[t]
    total = float(inst.fc()[assignment, np.arange(inst.n_clients)].sum())
    return assignment, total


# ------------------------------------------------------------------ basic

@dataclass
class LpSolveRecord:
    label: str
    fractional: int
    n_vars: int


@dataclass
class BasicTrace:
    alphas: dict = field(default_factory=dict)
    solves: list = field(default_factory=list)


def _alpha_lp(caps, dists, demand, budget):
    n = len(caps)
    caps = np.asarray(caps, dtype=float)
    A = np.vstack([np.ones(n), 1.0 / caps])
    lp = LinearProgram(np.asarray(dists, dtype=float), A, [EQ, LE], [demand, budget],
                       np.zeros(n), caps)
    out = solve_lp(lp)
    if not out.optimal:
        raise LpNumericalError(f"demand LP ended {out.status.value}")
    return out.x, fractional_count(out.x, lp.lower, lp.upper)


def round_basic(inst: Instance, frac: FractionalSolution, shares, clus: Clustering, trace=None):
    """Move each cluster's demand to its representative, then out along a vertex of the cluster LP."""
    trace = trace if trace is not None else BasicTrace()
    opened = {}
    fc = inst.fc()
    for v in clus.reps:
        U = clus.U[v]
        demand = float(frac.x[U].sum())
        budget = float(frac.y[U].sum())
        alpha, nfrac = _alpha_lp(inst.capacities[U], fc[U, v], demand, budget)
        trace.alphas[v] = dict(zip(U, alpha))
        trace.solves.append(LpSolveRecord(f"cluster {v}", nfrac, len(U)))
        for i, a in zip(U, alpha):
            if a > OPEN_TOL:
                opened[i] = opened.get(i, 0) + math.ceil(a / inst.capacities[i] - 1e-9)
    assignment, cost = final_assignment(inst, opened)
    return IntegralSolution(opened, assignment, cost)


# ----------------------------------------------------------------- config

class WitnessInfeasible(RoundingError):
    pass


@dataclass
class MoveResult:
    alpha: np.ndarray
    objective: float
    fractional: int
    witness_objective: float = None


def move_lp_group(caps, dists, demand, t, budget, witness=None) -> MoveResult:
    """Vertex of: min sum alpha_i d_i, alpha in [0, u], sum alpha = demand, sum alpha/u + t <= budget.

    ``witness`` is a feasible point known from the fractional solution; it is
    checked before solving and its objective bounds the optimum.
    """
    caps = np.asarray(caps, dtype=float)
    dists = np.asarray(dists, dtype=float)
    wobj = None
    if witness is not None:
        witness = np.asarray(witness, dtype=float)
        problems = []
        if np.any(witness < -FEAS_TOL) or np.any(witness > caps + FEAS_TOL):
            problems.append("bounds")
        if not abs(witness.sum() - demand) <= FEAS_TOL * max(1.0, demand):
            problems.append(f"demand {witness.sum():.9g} vs {demand:.9g}")
        if not within(float((witness / caps).sum()) + t, budget):
            problems.append(f"budget {(witness / caps).sum() + t:.9g} > {budget:.9g}")
        if problems:
            raise WitnessInfeasible("witness outside the demand LP: " + ", ".join(problems))
        wobj = float(witness @ dists)
    if demand <= FEAS_TOL:
        return MoveResult(np.zeros(len(caps)), 0.0, 0, wobj)
    alpha, nfrac = _alpha_lp(caps, dists, demand, budget - t)
    obj = float(alpha @ dists)
    if wobj is not None and not within(obj, wobj):
        raise RoundingError(f"demand LP optimum {obj} above the witness {wobj}")
    return MoveResult(alpha, obj, nfrac, wobj)


@dataclass
class ViolatedSet:
    B: list
    cut: Cut
    node: int
    violation: float


@dataclass
class GroupRecord:
    nodes: list
    is_root: bool
    tree: int
    facilities: list
    center: int
    demand: float
    preopened: int
    budget: float
    move: MoveResult
    to_center: float
    from_center: float
    opened: int


@dataclass
class ConfigTrace:
    ell: int
    ell1: int
    ell2: int
    clustering: Clustering = None
    cmst: object = None
    forest: object = None
    decomposition: object = None
    concentrated: dict = field(default_factory=dict)   # node -> bool (eligible nodes)
    preassignments: dict = field(default_factory=dict)  # node -> PreAssignment
    groups: list = field(default_factory=list)
    solves: list = field(default_factory=list)
    breakdown: dict = field(default_factory=dict)
    checks: CheckReport = field(default_factory=CheckReport)


def round_config(inst: Instance, frac: FractionalSolution, shares, clus: Clustering,
                 epsilon=1.0, rng=None, ell=None, max_retries=200):
    """Configuration rounding. Returns (IntegralSolution, ConfigTrace) or a ViolatedSet."""
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    ell = ell_for_epsilon(epsilon) if ell is None else int(ell)
    ell1, ell2 = ell1_for(ell), ell2_for(ell)
    trace = ConfigTrace(ell, ell1, ell2, clustering=clus)
    cmst, forest, dec = build_groups(inst, clus, frac, ell)
    trace.cmst, trace.forest, trace.decomposition = cmst, forest, dec
    fc, x = inst.fc(), frac.x

    # pre-open inside concentrated nodes
    fixed, preopen = {}, set()
    for p in forest.nodes:
        if p.parent is None and not within(p.weight, 2 * ell):
            continue
        conc = is_concentrated(p.members, clus, frac, ell2)
        trace.concentrated[p.id] = conc
        if not conc:
            continue
        B = clus.facilities_of(p.members)
        system = build_config_system(inst, frac, B, ell1)
        outcome = check_feasible(system, frac)
        if not outcome.feasible:
            return ViolatedSet(B, outcome.cut, p.id, outcome.violation_now)
        pre = preassign(inst, system, outcome.z, frac, ell, ell2, rng, max_retries)
        trace.preassignments[p.id] = pre
        preopen.update(pre.S)
        for j, i in sorted(pre.assignment.items()):
            fixed.setdefault(j, i)

    free = np.array([j not in fixed for j in inst.clients])
    opened = {i: 1 for i in preopen}
    x_free = x[:, free].sum(axis=1)
    x_all = x.sum(axis=1)
    for g in dec.groups:
        reps = forest.members(g.nodes)
        U = clus.facilities_of(reps)
        center = min(forest.nodes[g.anchor].members)
        witness = np.zeros(len(U))
        pos = {i: t for t, i in enumerate(U)}
        for p in g.nodes:
            Up = clus.facilities_of(forest.nodes[p].members)
            tot = x_all[Up].sum()
            ratio = x_free[Up].sum() / tot if tot > 0 else 0.0
            for i in Up:
                witness[pos[i]] = ratio * x_all[i]
        demand = float(x_free[U].sum())
        t = sum(1 for i in U if i in preopen)
        budget = (1 + 1 / ell) * float(frac.y[U].sum())
        dists = fc[U, center]
        try:
            move = move_lp_group(inst.capacities[U], dists, demand, t, budget, witness)
        except RoundingError as exc:
            raise type(exc)(f"group of nodes {g.nodes}: {exc}") from None
        trace.solves.append(LpSolveRecord(f"group {g.nodes}", move.fractional, len(U)))
        new = 0
        for i, a in zip(U, move.alpha):
            if a > OPEN_TOL:
                opened[i] = opened.get(i, 0) + 1
                new += 1
        trace.groups.append(GroupRecord(g.nodes, g.is_root, g.tree, U, center, demand, t, budget,
                                        move, float(x_free[U] @ dists), move.objective, new + t))
    if any(c > MAX_COPIES for c in opened.values()):
        raise RoundingError("a facility would be opened more than twice")
    assignment, cost = final_assignment(inst, opened, fixed)
    sol = IntegralSolution(opened, assignment, cost)

    d_av = shares.d_av
    trace.breakdown = {
        "preassign": float(sum(fc[i, j] for j, i in fixed.items())),
        "client_to_facility": float(d_av[free].sum()),
        "to_center": float(sum(gr.to_center for gr in trace.groups)),
        "from_center": float(sum(gr.from_center for gr in trace.groups)),
    }
    trace.checks = check_config_rounding(inst, frac, sol, trace)
    return sol, trace


def check_config_rounding(inst, frac, sol: IntegralSolution, trace: ConfigTrace) -> CheckReport:
    rep = CheckReport()
    rep.add("capacity_respected", sol.violations(inst))
    bound = sum(trace.breakdown.values())
    rep.add("cost_within_moving_bound", [] if within(sol.cost, bound) else [(sol.cost, bound)])
    per_tree = []
    dec, forest = trace.decomposition, trace.forest
    for r, found in dec.subtrees.items():
        tree_nodes = [p.id for p in forest.nodes if p.tree == r]
        facs = set(i for p in tree_nodes for v in forest.nodes[p].members for i in trace.clustering.U[v])
        opened = sum(c for i, c in sol.open.items() if i in facs)
        allowed = (1 + 1 / trace.ell) * float(frac.y[sorted(facs)].sum()) + 2 * (len(found) + 1)
        if not within(opened, allowed):
            per_tree.append((r, opened, allowed))
    rep.add("per_tree_openings", per_tree)
    group_open = [(gr.nodes, gr.opened, gr.budget) for gr in trace.groups
                  if not within(gr.opened, gr.budget + 2)]
    rep.add("group_openings", group_open)
    return rep


def cardinality_ok(sol: IntegralSolution, inst: Instance, ell) -> bool:
    return sol.opened_total <= cardinality_bound(inst.k, ell)


# ---------------------------------------------------------- cutting plane

@dataclass
class RoundReport:
    mode: str
    opened_total: int
    cost: float
    lp_value: float
    k: int
    breakdown: dict = field(default_factory=dict)
    cuts_emitted: int = 0
    iterations: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self):
        return self.cost / self.lp_value if self.lp_value > 0 else (0.0 if self.cost == 0 else math.inf)

    def to_text(self) -> str:
        items = [("mode", self.mode), ("opened_total", self.opened_total), ("k", self.k),
                 ("cardinality_slack", f"{self.opened_total / self.k:.6g}"),
                 ("cost", f"{self.cost:.12g}"), ("lp_value", f"{self.lp_value:.12g}"),
                 ("ratio", f"{self.ratio:.6g}"), ("cuts_emitted", self.cuts_emitted),
                 ("iterations", self.iterations)]
        items += [(f"cost_{k}", f"{v:.12g}") for k, v in self.breakdown.items()]
        items += list(self.extra.items())
        return "".join(f"{k} {v}\n" for k, v in items)


@dataclass
class CuttingPlaneResult:
    solution: IntegralSolution
    report: RoundReport
    frac: FractionalSolution
    trace: ConfigTrace
    cuts: list
    shares: object = None
    clustering: Clustering = None
    history: list = field(default_factory=list)   # CutRecord per cut, in cut order


@dataclass
class CutRecord:
    iteration: int       # master solve whose point the cut separates
    lp_value: float      # master value at that point
    B: tuple
    violation: float


def cluster_cuts(inst: Instance, frac: FractionalSolution, clus: Clustering, ell1, skip=()):
    """Cuts from the configuration systems of single clusters that the current point violates.

    Every configuration system is valid for integral solutions, so these cuts may
    be added alongside the one the rounding reported; they speed up convergence
    when the violated set is large and its cut only touches a few clients.
    """
    found, seen = [], {tuple(sorted(b)) for b in skip}
    for v in clus.reps:
        B = sorted(clus.U[v])
        if not B or tuple(B) in seen:
            continue
        seen.add(tuple(B))
        outcome = check_feasible(build_config_system(inst, frac, B, ell1), frac)
        if not outcome.feasible:
            found.append((B, outcome.cut, outcome.violation_now))
    return found


def cutting_plane_solve(inst: Instance, epsilon=1.0, rng=None, max_iters=50, max_retries=200,
                        ell=None, probe_clusters=True) -> CuttingPlaneResult:
    """Re-solve the basic LP with accumulated cuts until the configuration rounding succeeds."""
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    cuts, history = [], []
    prev = None
    for it in range(1, max_iters + 1):
        frac = solve_basic(inst, cuts)
        if prev is not None:
            if max(c.evaluate(frac.x, frac.y) for c in cuts[n_prev:]) > FEAS_TOL:
                raise RoundingError("re-solved point still violates a newly added cut")
            if frac.lp_value < prev.lp_value - FEAS_TOL * max(1.0, prev.lp_value):
                raise RoundingError("master LP value decreased after adding a cut")
        shares = cost_shares(inst, frac)
        clus = cluster(inst, shares)
        out = round_config(inst, frac, shares, clus, epsilon, rng, ell, max_retries)
        if isinstance(out, ViolatedSet):
            if not out.cut.evaluate(frac.x, frac.y) > CERT_TOL:
                raise RoundingError("emitted cut does not separate the current point")
            n_prev = len(cuts)
            history.append(CutRecord(it, frac.lp_value, tuple(out.B), out.violation))
            cuts.append(out.cut)
            if probe_clusters:
                level = ell_for_epsilon(epsilon) if ell is None else int(ell)
                for B, cut, viol in cluster_cuts(inst, frac, clus, ell1_for(level), [out.B]):
                    history.append(CutRecord(it, frac.lp_value, tuple(B), viol))
                    cuts.append(cut)
            prev = frac
            continue
        sol, trace = out
        report = RoundReport("config", sol.opened_total, sol.cost, frac.lp_value, inst.k,
                             trace.breakdown, len(cuts), it)
        return CuttingPlaneResult(sol, report, frac, trace, cuts, shares, clus, history)
    raise CuttingPlaneExhausted(f"no rounding after {max_iters} iterations", history)


def solve_basic_rounding(inst: Instance):
    frac = solve_basic(inst)
    shares = cost_shares(inst, frac)
    clus = cluster(inst, shares)
    trace = BasicTrace()
    sol = round_basic(inst, frac, shares, clus, trace)
    report = RoundReport("basic", sol.opened_total, sol.cost, frac.lp_value, inst.k)
    return sol, report, frac, shares, clus, trace


# --------------------------------------------------------------- text I/O

def write_solution(sol: IntegralSolution, inst: Instance) -> str:
    lines = [SOLUTION_HEADER, f"cost {sol.cost:.12g} opened {sol.opened_total} k {inst.k}"]
    lines += [f"open {i} {c}" for i, c in sorted(sol.open.items()) if c > 0]
    lines += [f"assign {j} {int(i)}" for j, i in enumerate(sol.assignment)]
    return "\n".join(lines) + "\n"


def read_solution(text: str, inst: Instance) -> IntegralSolution:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or " ".join(lines[0]) != SOLUTION_HEADER:
        raise ValueError("missing solution header")
    opened, assignment = {}, np.full(inst.n_clients, -1, dtype=np.int64)
    cost = float(lines[1][1])
    for toks in lines[2:]:
        if toks[0] == "open":
            opened[int(toks[1])] = int(toks[2])
        elif toks[0] == "assign":
            assignment[int(toks[1])] = int(toks[2])
        else:
            raise ValueError(f"unknown record {toks[0]!r}")
    return IntegralSolution(opened, assignment, cost)
