"""Quantitative acceptance suite; each test records one PASS/FAIL line (see conftest)."""
import itertools
from time import perf_counter

import numpy as np
import pytest

from ckm.basiclp import cost_shares, solve_basic
from ckm.cluster import cluster
from ckm.configlp import _clean_matching, build_config_system, check_feasible, preassign
from ckm.constants import cardinality_bound, cost_constant, ell1_for, ell2_for
from ckm.grouping import build_groups, check_decomposition, check_forest, check_mst
from ckm.instance import gen_gap_instance, gen_suite_instance
from ckm.lpsolve import BMatchingProblem, dependent_round, min_cost_b_matching
from ckm.oracle import PipelineBundle, audit, exact_opt
from ckm.round import (BasicTrace, CuttingPlaneExhausted, ViolatedSet, cutting_plane_solve,
                       round_basic, round_config, solve_basic_rounding)

from builders import concentrated_instance

SUITE = range(1, 51)
EPSILON, ELL = 1.0, 5
ELL2 = ell2_for(ELL)
K_CONST = cost_constant(ELL, ELL2)
LIMIT = {1: 60, 2: 300, 3: 600, 4: 120, 5: 180, 7: 120, 8: 30}
REL_TOL = 1e-7
VERTEX_MAX = 2


def report(record_property, number, ok, title, detail):
    record_property("acceptance", (number, bool(ok), title, detail))
    assert ok, f"criterion {number} {title}: {detail}"


@pytest.fixture(scope="module")
def basic_runs():
    t0 = perf_counter()
    runs = {seed: solve_basic_rounding(gen_suite_instance(seed)) for seed in SUITE}
    return runs, perf_counter() - t0


@pytest.fixture(scope="module")
def config_runs():
    """Cutting-plane driver per suite seed; an exhausted run is kept as its exception."""
    t0 = perf_counter()
    runs = {}
    for seed in SUITE:
        inst = gen_suite_instance(seed)
        try:
            runs[seed] = (inst, cutting_plane_solve(inst, EPSILON, np.random.default_rng(seed)))
        except CuttingPlaneExhausted as exc:
            runs[seed] = (inst, exc)
    return runs, perf_counter() - t0


def successes(runs):
    return {s: (inst, r) for s, (inst, r) in runs.items() if not isinstance(r, Exception)}


def test_criterion_1_basic_guarantee(record_property, basic_runs):
    runs, elapsed = basic_runs
    bad = []
    worst_open, worst_ratio = 0.0, 0.0
    for seed, (sol, rep, frac, *_rest) in runs.items():
        inst = gen_suite_instance(seed)
        ok = (sol.violations(inst) == [] and sol.opened_total <= 4 * inst.k
              and sol.cost <= 11 * frac.lp_value * (1 + REL_TOL) + REL_TOL)
        if not ok:
            bad.append(seed)
        worst_open = max(worst_open, sol.opened_total / inst.k)
        if frac.lp_value > 0:
            worst_ratio = max(worst_ratio, sol.cost / frac.lp_value)
    ok = not bad and elapsed <= LIMIT[1]
    report(record_property, 1, ok, "(4,11) basic rounding",
           f"{len(runs) - len(bad)}/{len(runs)} ok, max opened/k {worst_open:.2f}, "
           f"max cost/LP {worst_ratio:.3f}, {elapsed:.1f}s (limit {LIMIT[1]}s)")


def test_criterion_2_config_cardinality(record_property, config_runs):
    runs, elapsed = config_runs
    good = successes(runs)
    bad = [s for s, (inst, r) in good.items()
           if r.solution.opened_total > cardinality_bound(inst.k, ELL) or r.solution.violations(inst)]
    exhausted = sorted(set(runs) - set(good))
    ok = not bad and bool(good) and elapsed <= LIMIT[2]
    report(record_property, 2, ok, "config rounding cardinality <= floor((1+5/l)k)",
           f"{len(good) - len(bad)}/{len(good)} successful runs within bound; "
           f"exhausted after 50 iterations (reported, not counted): {exhausted}; "
           f"{elapsed:.1f}s (limit {LIMIT[2]}s)")


def test_criterion_3_config_cost(record_property, config_runs):
    runs, elapsed = config_runs
    good = successes(runs)
    t0 = perf_counter()
    bad, worst = [], 0.0
    for seed, (inst, r) in good.items():
        if not r.solution.cost <= K_CONST * r.report.lp_value:
            bad.append(("K", seed))
        opt = exact_opt(inst).opt_cost
        ratio = r.solution.cost / opt if opt > 0 else (1.0 if r.solution.cost == 0 else np.inf)
        worst = max(worst, ratio)
    total = elapsed + perf_counter() - t0
    ok = not bad and worst <= 20 and total <= LIMIT[3]
    report(record_property, 3, ok, f"config rounding cost <= K*LP (K={K_CONST})",
           f"{len(good) - len(bad)}/{len(good)} within K, empirical max cost/opt {worst:.4f} "
           f"(bound 20), {total:.1f}s with oracle (limit {LIMIT[3]}s)")


def random_integral_points(inst, count, rng):
    """Capacity-feasible integral (x, y) with at most k open facilities."""
    nf, nc = inst.n_facilities, inst.n_clients
    out = []
    while len(out) < count:
        opened = rng.choice(nf, size=inst.k, replace=False)
        slots = np.repeat(opened, inst.capacities[opened])
        if len(slots) < nc:
            continue
        assign = rng.permutation(slots)[:nc]
        x = np.zeros((nf, nc))
        x[assign, np.arange(nc)] = 1
        y = np.zeros(nf)
        y[opened] = 1
        out.append((x, y))
    return out


def test_criterion_4_gap_separation(record_property):
    t0 = perf_counter()
    inst = gen_gap_instance(3, 100)
    lp = solve_basic(inst).lp_value
    opt = exact_opt(inst).opt_cost
    res = cutting_plane_solve(inst, EPSILON, np.random.default_rng(1))
    separated = True
    for it in sorted({rec.iteration for rec in res.history}):
        before = sum(1 for rec in res.history if rec.iteration < it)
        frac = solve_basic(inst, res.cuts[:before])
        for m, rec in enumerate(res.history):
            if rec.iteration == it and not res.cuts[m].evaluate(frac.x, frac.y) > 1e-9:
                separated = False
    hard = exact_opt(inst, max_copies=1)
    x = np.zeros((inst.n_facilities, inst.n_clients))
    x[hard.assignment, np.arange(inst.n_clients)] = 1
    y = np.zeros(inst.n_facilities)
    y[list(hard.opt_open)] = 1
    points = [(x, y)] + random_integral_points(inst, 300, np.random.default_rng(0))
    valid = all(c.evaluate(px, py) <= REL_TOL for c in res.cuts for px, py in points)
    elapsed = perf_counter() - t0
    ok = (abs(lp) <= 1e-9 and opt >= 100 and len(res.cuts) >= 1 and separated and valid
          and res.report.iterations <= 50 and elapsed <= LIMIT[4])
    report(record_property, 4, ok, "gap instance u=3, L=100",
           f"LP {lp:.3g}, exact opt {opt:.6g}, {len(res.cuts)} cuts over "
           f"{res.report.iterations} iterations, each separates its point: {separated}, "
           f"valid on {len(points)} integral points: {valid}, final cost {res.solution.cost:.6g}, "
           f"{elapsed:.1f}s (limit {LIMIT[4]}s)")


def audit_point(inst, frac, rng, config=None):
    """Audit both roundings at ``frac``; ``config`` reuses a finished configuration run."""
    shares = cost_shares(inst, frac)
    clus = cluster(inst, shares)
    btrace = BasicTrace()
    bsol = round_basic(inst, frac, shares, clus, btrace)
    out = config if config is not None else round_config(inst, frac, shares, clus, EPSILON, rng)
    rep = None
    if isinstance(out, ViolatedSet):
        # the configuration rounding stopped at a cut: audit its grouping stage directly
        cmst, forest, dec = build_groups(inst, clus, frac, ELL)
        rep = check_mst(inst, cmst).merge(check_forest(forest)).merge(check_decomposition(forest, dec))
        out = (None, None)
    bundle = PipelineBundle(inst, frac, shares, clus, bsol, btrace, *out)
    full = audit(bundle)
    if rep is not None:
        full.merge(rep)
    return full, out[0] is not None


def test_criterion_5_invariant_audit(record_property, config_runs):
    runs, _ = config_runs
    t0 = perf_counter()
    failures, checks, with_config = [], set(), 0
    for seed in SUITE:
        inst, r = runs[seed]
        rep, ran = audit_point(inst, solve_basic(inst), np.random.default_rng(seed))
        points = [rep]
        with_config += ran
        if not isinstance(r, Exception):
            rep, _ = audit_point(inst, r.frac, None, config=(r.solution, r.trace))
            points.append(rep)
            with_config += 1
        for rep in points:
            checks.update(rep.checks)
            failures += [(seed, name) for name in rep.failed()]
    elapsed = perf_counter() - t0
    ok = not failures and elapsed <= LIMIT[5]
    report(record_property, 5, ok, "invariant audit over the suite",
           f"{len(checks)} named checks at the initial and final master points, "
           f"{with_config} audits with full configuration artifacts, failures {failures[:5]}, "
           f"{elapsed:.1f}s (limit {LIMIT[5]}s)")


def test_criterion_6_vertex_property(record_property, basic_runs, config_runs):
    solves = [s for run in basic_runs[0].values() for s in run[5].solves]
    solves += [s for _, r in successes(config_runs[0]).values() for s in r.trace.solves]
    worst = max(s.fractional for s in solves)
    ok = worst <= VERTEX_MAX and len(solves) > 0
    report(record_property, 6, ok, "vertex solutions",
           f"{len(solves)} per-cluster/per-group LP solves, max fractional variables {worst}")


def test_criterion_7_preassign(record_property):
    t0 = perf_counter()
    inst, frac = concentrated_instance()
    sys = build_config_system(inst, frac, [0, 1], ell1_for(ELL))
    out = check_feasible(sys, frac)
    rng = np.random.default_rng(2024)
    first_try, bad = 0, 0
    n_runs = 1000
    for _ in range(n_runs):
        pre = preassign(inst, sys, out.z, frac, ELL, ELL2, rng)
        bad += not all(pre.properties.values())
        first_try += pre.attempts == 1
    rate = first_try / n_runs
    # dependent-rounding marginals: the heaviest configuration's matching and a fractional one
    s = max(range(len(sys.sets) - 1), key=lambda t: out.z[sys.var_set[t]])
    S, zs = list(sys.sets[s]), out.z[sys.var_set[s]]
    w = np.array([[out.z[sys.var_serve[s, i, j]] / zs for j in sys.clients] for i in S])
    cases = [(_clean_matching(w, inst.capacities[S].astype(float)), inst.capacities[S]),
             averaged_matching(5, 10, 3, 3, rng)]
    trials, worst_z, n_frac = 1000, 0.0, 0
    for w, caps in cases:
        freq = sum(dependent_round(w, caps, rng=rng) for _ in range(trials)) / trials
        sigma = np.sqrt(w * (1 - w) / trials)
        inside = (w > 0) & (w < 1)
        n_frac += int(inside.sum())
        if inside.any():
            worst_z = max(worst_z, float(np.max(np.abs(freq - w)[inside] / sigma[inside])))
        if np.any(np.abs(freq - w)[~inside] > 0):
            worst_z = np.inf
    elapsed = perf_counter() - t0
    ok = bad == 0 and rate >= 0.2 and worst_z <= 4 and n_frac > 0 and elapsed <= LIMIT[7]
    report(record_property, 7, ok, "pre-assignment Monte-Carlo",
           f"{n_runs} runs, property failures {bad}, first-attempt acceptance {rate:.3f} (>= 0.2), "
           f"marginals over {n_frac} fractional entries max |dev|/sigma {worst_z:.2f} (<= 4), "
           f"{elapsed:.1f}s (limit {LIMIT[7]}s)")


def averaged_matching(rows, cols, cap, parts, rng):
    """Mean of ``parts`` random integral b-matchings: fractional, and feasible by convexity."""
    caps = np.full(rows, cap)
    w = np.zeros((rows, cols))
    for _ in range(parts):
        slots = rng.permutation(np.repeat(np.arange(rows), cap))
        take = rng.random(cols) < 0.8
        for j in np.flatnonzero(take[:len(slots)]):
            w[slots[j], j] += 1 / parts
    return w, caps


def brute_assignment(cost, caps):
    best = np.inf
    for choice in itertools.product(range(cost.shape[1]), repeat=cost.shape[0]):
        if np.all(np.bincount(choice, minlength=len(caps)) <= caps):
            best = min(best, sum(cost[c, f] for c, f in enumerate(choice)))
    return best


def test_criterion_8_bmatching_oracle(record_property):
    t0 = perf_counter()
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(100):
        cost = rng.integers(0, 21, size=(5, 5)).astype(float)
        caps = rng.integers(1, 4, size=5)
        while caps.sum() < 5:
            caps = rng.integers(1, 4, size=5)
        got = min_cost_b_matching(BMatchingProblem(np.ones(5), caps, cost)).cost
        mismatches += got != brute_assignment(cost, caps)
    elapsed = perf_counter() - t0
    ok = mismatches == 0 and elapsed <= LIMIT[8]
    report(record_property, 8, ok, "b-matching vs brute force",
           f"100 random 5x5 problems, {mismatches} mismatches, {elapsed:.1f}s (limit {LIMIT[8]}s)")
