"""Per-set configuration systems, concentrated sets and randomized pre-assignment.

For a facility set B the configuration system distributes one unit of mass
over the candidate open sets S of B with at most ell1 members, plus a sentinel
``BOTTOM`` meaning "more than ell1 open". Its right-hand sides are affine in
the current (x, y); when it is infeasible a Farkas certificate yields a linear
inequality in (x, y) that every integral solution satisfies and the current
point violates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import sparse

from .basiclp import Cut, FractionalSolution
from .constants import CERT_TOL, FEAS_TOL, MAX_CONFIG_SETS, ZERO_MASS
from .instance import Instance
from .lpsolve import EQ, GE, LE, LinearProgram, dependent_round, farkas_check, solve_lp_sparse
from .report import within

BOTTOM = None  # sentinel set: more than ell1 facilities of B are open


class ConfigResourceError(RuntimeError):
    """The number of enumerated sets would exceed the configured budget."""


class PreassignFailure(RuntimeError):
    def __init__(self, message, B=()):
        super().__init__(message)
        self.B = tuple(B)


def pi_of_facilities(B, frac: FractionalSolution) -> float:
    xb = frac.x[list(B)].sum(axis=0)
    return float((xb * (1.0 - xb)).sum())


def pi_value(J, clus, frac: FractionalSolution) -> float:
    """Mass of clients split between U(J) and the rest: sum_j x_{U(J),j} (1 - x_{U(J),j})."""
    return pi_of_facilities(clus.facilities_of(J), frac)


def is_concentrated(J, clus, frac: FractionalSolution, ell2) -> bool:
    B = clus.facilities_of(J)
    return pi_of_facilities(B, frac) <= frac.x[B].sum() / ell2


@dataclass
class ConfigSystem:
    B: list
    ell1: int
    clients: list              # C_B, clients with positive mass in B
    sets: list                 # tuples of facility ids, BOTTOM last
    lp: LinearProgram          # rows with rhs evaluated at the current (x, y)
    rhs_const: np.ndarray      # constant part of every right-hand side
    row_of_y: dict             # i -> row whose rhs is y_i
    row_of_x: dict             # (i, j) -> row whose rhs is x_{i,j}
    var_set: np.ndarray        # index of z_S per set
    var_open: dict             # (set index, i) -> index of z_{S,i}
    var_serve: dict            # (set index, i, j) -> index of z_{S,i,j}
    shape_x: tuple = (0, 0)

    @property
    def n_vars(self):
        return self.lp.n_vars

    def members(self, s):
        return self.B if self.sets[s] is BOTTOM else list(self.sets[s])

    def rhs_at(self, x, y):
        rhs = self.rhs_const.copy()
        for i, r in self.row_of_y.items():
            rhs[r] += y[i]
        for (i, j), r in self.row_of_x.items():
            rhs[r] += x[i, j]
        return rhs


def expected_var_count(n_sets_with_bottom, set_sizes, n_b, n_clients):
    """|S~| + sum over ordinary S of |S| (1 + |C_B|) + |B| (1 + |C_B|) for the sentinel."""
    return n_sets_with_bottom + sum(set_sizes) * (1 + n_clients) + n_b * (1 + n_clients)


def enumerate_sets(B, ell1):
    """Subsets of B with at most ell1 members, ordered by their bitmask over B, then BOTTOM."""
    B = sorted(B)
    count = sum(math.comb(len(B), s) for s in range(min(ell1, len(B)) + 1))
    if count > MAX_CONFIG_SETS:
        raise ConfigResourceError(f"{count} configuration sets for |B|={len(B)} exceed "
                                  f"the budget of {MAX_CONFIG_SETS}")
    sets = []
    for size in range(min(ell1, len(B)) + 1):
        sets.extend(combinations(range(len(B)), size))
    sets.sort(key=lambda pos: sum(1 << p for p in pos))
    return [tuple(B[p] for p in pos) for pos in sets] + [BOTTOM]


def build_config_system(inst: Instance, frac: FractionalSolution, B, ell1) -> ConfigSystem:
    B = sorted(int(i) for i in B)
    if not B:
        raise ValueError("B must be nonempty")
    sets = enumerate_sets(B, ell1)
    xb = frac.x[B].sum(axis=0)
    clients = [int(j) for j in np.flatnonzero(xb > ZERO_MASS)]
    nc = len(clients)
    caps = inst.capacities

    var_set = np.empty(len(sets), dtype=np.int64)
    var_open, var_serve = {}, {}
    n = 0
    for s, S in enumerate(sets):
        var_set[s] = n
        n += 1
        for i in (B if S is BOTTOM else S):
            var_open[s, i] = n
            n += 1
            for j in clients:
                var_serve[s, i, j] = n
                n += 1

    rows, cols, vals = [], [], []
    senses, const = [], []
    row_of_y, row_of_x = {}, {}

    def add(entries, sense, c=0.0):
        r = len(senses)
        for col, v in entries:
            rows.append(r)
            cols.append(col)
            vals.append(v)
        senses.append(sense)
        const.append(c)
        return r

    # one unit of mass over the configurations
    add([(int(v), 1.0) for v in var_set], EQ, 1.0)
    # opening marginals reproduce y, serving marginals reproduce x
    for i in B:
        row_of_y[i] = add([(var_open[s, i], 1.0) for s in range(len(sets))
                           if (s, i) in var_open], EQ)
    for i in B:
        for j in clients:
            row_of_x[i, j] = add([(var_serve[s, i, j], 1.0) for s in range(len(sets))
                                  if (s, i) in var_open], EQ)
    for s, S in enumerate(sets):
        members = B if S is BOTTOM else S
        zs = int(var_set[s])
        for i in members:
            zi = var_open[s, i]
            # serving needs opening, opening needs the configuration
            for j in clients:
                add([(var_serve[s, i, j], 1.0), (zi, -1.0)], LE)
            add([(zi, 1.0), (zs, -1.0)], LE)
            if S is not BOTTOM:
                add([(zi, 1.0), (zs, -1.0)], EQ)
        # each client served at most once inside the configuration
        for j in clients:
            add([(var_serve[s, i, j], 1.0) for i in members] + [(zs, -1.0)], LE)
        # capacities of the open facilities
        for i in members:
            add([(var_serve[s, i, j], 1.0) for j in clients]
                + [(var_open[s, i], -float(caps[i]))], LE)
        if S is BOTTOM:
            add([(var_open[s, i], 1.0) for i in B] + [(zs, -float(ell1))], GE)

    m = len(senses)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n))
    rhs_const = np.array(const)
    sys = ConfigSystem(B, ell1, clients, sets, None, rhs_const, row_of_y, row_of_x,
                       var_set, var_open, var_serve, frac.x.shape)
    sys.lp = LinearProgram(np.zeros(n), A, senses, sys.rhs_at(frac.x, frac.y),
                           np.zeros(n), np.ones(n))
    return sys


@dataclass
class Feasible:
    z: np.ndarray
    violation: float

    feasible = True


@dataclass
class Infeasible:
    cut: Cut
    violation_now: float

    feasible = False


def cut_from_certificate(sys: ConfigSystem, ray, g_lower, g_upper) -> Cut:
    """Aggregate a certificate into  const + coef_x . x + coef_y . y <= 0.

    With mu the row multipliers as written, every feasible z satisfies
    mu . rhs(x, y) <= g_upper . 1 - g_lower . 0, so the cut reads
    mu . rhs(x, y) - g_upper . 1 <= 0.
    """
    lp = sys.lp
    mu = ray * np.array([-1.0 if s == LE else 1.0 for s in lp.senses])
    coef_x = np.zeros(sys.shape_x)
    coef_y = np.zeros(sys.shape_x[0])
    for i, r in sys.row_of_y.items():
        coef_y[i] += mu[r]
    for (i, j), r in sys.row_of_x.items():
        coef_x[i, j] += mu[r]
    const = float(mu @ sys.rhs_const + g_lower @ lp.lower - g_upper @ lp.upper)
    return Cut(coef_x, coef_y, const, origin=tuple(sys.B))


def check_feasible(sys: ConfigSystem, frac: FractionalSolution = None):
    """Phase-1 feasibility of the system; Infeasible carries a cut violated at (x, y).

    Only the rows reproducing x and y may be violated during phase 1; every
    other row is satisfied by putting all mass on the empty set. The duals then
    describe an L1 projection onto the feasible (x, y), which makes the cut
    touch that set instead of merely separating the point.
    """
    varying = sorted(list(sys.row_of_y.values()) + list(sys.row_of_x.values()))
    out = solve_lp_sparse(sys.lp, relax=varying)
    if out.optimal:
        return Feasible(out.x, sys.lp.row_violation(out.x))
    residual, value = farkas_check(sys.lp, out.farkas_ray, out.farkas_lower, out.farkas_upper)
    if residual > FEAS_TOL or value <= CERT_TOL:
        raise RuntimeError(f"configuration certificate failed re-check ({residual:.3g}, {value:.3g})")
    cut = cut_from_certificate(sys, out.farkas_ray, out.farkas_lower, out.farkas_upper)
    if frac is not None:
        now = cut.evaluate(frac.x, frac.y)
        if not now > CERT_TOL:
            raise RuntimeError(f"cut evaluates to {now:.3g} at the current point")
    else:
        now = value
    return Infeasible(cut, now)


def config_violation(sys: ConfigSystem, z, x, y) -> float:
    """Largest violation of the configuration rows at z for the point (x, y)."""
    lp = sys.lp
    probe = LinearProgram(lp.objective, lp.A, lp.senses, sys.rhs_at(x, y), lp.lower, lp.upper)
    return probe.row_violation(z)


# ------------------------------------------------------------ pre-assignment

@dataclass
class PreAssignment:
    B: list
    S: list
    assignment: dict           # client -> facility in S
    cost: float
    attempts: int
    rank: int = 0
    q: float = 0.0
    properties: dict = field(default_factory=dict)


def rank_of(Y, size):
    """Rank of a set of ``size`` facilities, or None when size exceeds Y."""
    gap = Y - size
    if gap < 0:
        return None
    if gap < 1:
        return 0
    # gap in [2^(t-1), 2^t)  <=>  frexp exponent == t
    return math.frexp(gap)[1]


def rank_scale(Y, t):
    return Y - math.floor(Y) if t == 0 else 2.0 ** t


def rank_count(Y):
    """delta: ranks run over 0 .. delta - 1."""
    return max(1, math.floor(math.log2(Y)) + 2) if Y >= 1 else 1


def preassign_properties(inst, frac, B, pi, S, assignment, ell, ell2):
    """Evaluate the four acceptance properties of a candidate pre-assignment."""
    xb = frac.x[B].sum(axis=0)
    xbc = float(xb.sum())
    yb = float(frac.y[B].sum())
    D_B = float((frac.x[B] * inst.fc()[B]).sum())
    matched = np.zeros(inst.n_clients, dtype=bool)
    matched[list(assignment)] = True
    rest = float(xb[~matched].sum())
    load = {i: 0 for i in S}
    for j, i in assignment.items():
        load[i] = load.get(i, 0) + 1
    cost = float(sum(inst.fc()[i, j] for j, i in assignment.items()))
    Y = (1 + 1 / ell) * yb
    return {
        "capacity": all(i in S and load[i] <= inst.capacities[i] for i in load),
        "remaining_demand": within(rest, ell2 * pi),
        "opening_budget": within((rest / xbc if xbc > 0 else 0.0) * yb + len(S), Y),
        "cost": within(cost, ell2 * D_B),
    }, cost


def _clean_matching(w, caps):
    w = np.clip(w, 0.0, 1.0)
    col = w.sum(axis=0)
    w[:, col > 1] /= col[col > 1]
    row = w.sum(axis=1)
    over = row > caps
    w[over] *= (caps[over] / row[over])[:, None]
    return w


def preassign(inst: Instance, sys: ConfigSystem, z, frac: FractionalSolution, ell, ell2,
              rng, max_retries=200) -> PreAssignment:
    B = sys.B
    if ell < 2:
        raise ValueError("pre-assignment needs ell >= 2")
    yb = float(frac.y[B].sum())
    if not within(yb, 2 * ell):
        raise ValueError(f"y_B = {yb:.6g} exceeds 2 ell")
    pi = pi_of_facilities(B, frac)
    Y = (1 + 1 / ell) * yb
    delta = rank_count(Y)
    mass = np.array([z[sys.var_set[s]] for s in range(len(sys.sets))])
    ranks = [None if S is BOTTOM else rank_of(Y, len(S)) for S in sys.sets]
    q_by_rank = {}
    for s, t in enumerate(ranks):
        if t is not None and mass[s] > ZERO_MASS:
            q_by_rank[t] = q_by_rank.get(t, 0.0) + mass[s]
    if not q_by_rank:
        raise PreassignFailure("no configuration of rankable size carries mass", B)
    t = min(q_by_rank, key=lambda r: (-rank_scale(Y, r) * q_by_rank[r], r))
    q = q_by_rank[t]
    best = rank_scale(Y, t) * q
    if not within(yb / (delta * ell), best):
        raise PreassignFailure(f"best rank class weighs {best:.3g} < y_B/(delta ell)", B)
    if 3 / q > ell2 or 6 * ell * delta > ell2:
        raise AssertionError(f"ell2={ell2} too small: 3/q={3 / q:.3g}, 6 ell delta={6 * ell * delta}")

    cls = [s for s in range(len(sys.sets)) if ranks[s] == t and mass[s] > ZERO_MASS]
    cdf = np.cumsum(mass[cls])
    clients = sys.clients
    caps = inst.capacities
    for attempt in range(1, max_retries + 1):
        s = cls[min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cls) - 1)]
        S = list(sys.sets[s])
        zs = mass[s]
        w = np.array([[z[sys.var_serve[s, i, j]] / zs for j in clients] for i in S]).reshape(len(S), len(clients))
        w = _clean_matching(w, caps[S].astype(float))
        pick = dependent_round(w, caps[S], rng=rng)
        assignment = {clients[c]: S[r] for r, c in zip(*np.nonzero(pick))}
        props, cost = preassign_properties(inst, frac, B, pi, S, assignment, ell, ell2)
        if all(props.values()):
            return PreAssignment(B, S, assignment, cost, attempt, t, q, props)
    raise PreassignFailure(f"no acceptable pre-assignment in {max_retries} attempts", B)
