import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from ckm.lpsolve import (EQ, GE, LE, BMatchingInfeasible, BMatchingProblem, LinearProgram,
                         LpNumericalError, dependent_round, farkas_check, fractional_count,
                         min_cost_b_matching, solve_lp, solve_lp_sparse)


# ---------- simplex ----------

def test_single_variable_lower_row():
    lp = LinearProgram.from_rows([1.0], [([1.0], GE, 3.0)], bounds=[(0, 10)])
    out = solve_lp(lp)
    assert out.optimal and out.x[0] == pytest.approx(3.0)


@pytest.mark.parametrize("solver", [solve_lp, solve_lp_sparse])
def test_two_row_contradiction_certificate(solver):
    lp = LinearProgram.from_rows([0.0], [([1.0], GE, 2.0), ([1.0], LE, 1.0)])
    out = solver(lp)
    assert out.infeasible
    np.testing.assert_allclose(out.farkas_ray, [1.0, 1.0], atol=1e-9)
    residual, value = farkas_check(lp, out.farkas_ray, out.farkas_lower, out.farkas_upper)
    assert residual <= 1e-7 and value > 1e-9


def _vertex_oracle(c, A, senses, b):
    """Best basic feasible solution of {A x (senses) b, x >= 0} by enumerating bases."""
    m, n = A.shape
    slack = np.zeros((m, m))
    for r, s in enumerate(senses):
        slack[r, r] = 1.0 if s == LE else -1.0
    M = np.hstack([A, slack])
    cost = np.concatenate([c, np.zeros(m)])
    best = np.inf
    for cols in itertools.combinations(range(n + m), m):
        B = M[:, cols]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        xb = np.linalg.solve(B, b)
        if np.all(xb >= -1e-9):
            best = min(best, float(cost[list(cols)] @ xb))
    return best


@pytest.mark.parametrize("seed", range(20))
def test_random_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 10
    A = np.vstack([rng.uniform(0, 1, size=(3, n)), rng.uniform(0, 1, size=(1, n)), np.ones((1, n))])
    senses = [LE, LE, LE, GE, LE]
    b = np.concatenate([rng.uniform(1, 3, size=3), [0.5], [10.0]])
    c = rng.normal(size=n)
    out = solve_lp(LinearProgram(c, A, senses, b))
    assert out.optimal
    assert out.objective_value == pytest.approx(_vertex_oracle(c, A, senses, b), abs=1e-6)
    assert fractional_count(out.x, np.zeros(n), np.full(n, np.inf)) <= len(b)


@pytest.mark.parametrize("seed", range(10))
def test_bounded_variables_match_reference_solver(seed):
    rng = np.random.default_rng(100 + seed)
    n, m = 8, 5
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, size=n)
    senses = [LE, GE, EQ, LE, GE]
    b = A @ x0 + np.array([0.3, -0.3, 0.0, 0.1, -0.2])
    c = rng.normal(size=n)
    lp = LinearProgram(c, A, senses, b, np.zeros(n), np.full(n, 1.5))
    out = solve_lp(lp)
    ref = linprog(c, A_ub=np.vstack([A[[0, 3]], -A[[1, 4]]]),
                  b_ub=np.concatenate([b[[0, 3]], -b[[1, 4]]]), A_eq=A[[2]], b_eq=b[[2]],
                  bounds=[(0, 1.5)] * n, method="highs")
    assert out.optimal
    assert out.objective_value == pytest.approx(ref.fun, abs=1e-6)
    assert lp.row_violation(out.x) <= 1e-7
    assert fractional_count(out.x, lp.lower, lp.upper) <= m


@pytest.mark.parametrize("seed", range(10))
def test_random_infeasible_systems_certified(seed):
    rng = np.random.default_rng(200 + seed)
    n = 6
    A = rng.normal(size=(4, n))
    # row 4 demands A0 x >= b0 + 0.5 while row 0 demands A0 x <= b0
    A = np.vstack([A, -A[0]])
    b = np.concatenate([rng.normal(size=4), [0.0]])
    b[4] = -b[0] - 0.5
    senses = [LE, LE, GE, LE, LE]
    lp = LinearProgram(np.zeros(n), A, senses, b, np.zeros(n), np.full(n, 3.0))
    for solver in (solve_lp, solve_lp_sparse):
        out = solver(lp)
        assert out.infeasible
        residual, value = farkas_check(lp, out.farkas_ray, out.farkas_lower, out.farkas_upper)
        assert residual <= 1e-7 and value > 1e-9


def test_unbounded_detected():
    lp = LinearProgram.from_rows([-1.0, 0.0], [([1.0, -1.0], LE, 1.0)])
    assert solve_lp(lp).status.value == "unbounded"


def test_certificate_rejects_tampering():
    lp = LinearProgram.from_rows([0.0], [([1.0], GE, 2.0), ([1.0], LE, 1.0)])
    out = solve_lp(lp)
    residual, _ = farkas_check(lp, out.farkas_ray * np.array([1.0, 0.5]),
                               out.farkas_lower, out.farkas_upper)
    assert residual > 1e-7


def test_equal_rows_degenerate_lp_terminates():
    # many ties; Bland's rule must not cycle
    A = np.array([[1, 1, 1], [1, 1, 1], [1, 0, 0], [0, 1, 0]], dtype=float)
    lp = LinearProgram([-1, -1, -1], A, [LE] * 4, [1, 1, 0, 0])
    out = solve_lp(lp)
    assert out.optimal and out.objective_value == pytest.approx(-1.0)


# ---------- b-matching ----------

def test_bmatching_single_pair():
    res = min_cost_b_matching(BMatchingProblem([1], [1], [[5.0]]))
    assert res.cost == 5.0 and res.flow.tolist() == [[1]]


def test_bmatching_forced_pair():
    res = min_cost_b_matching(BMatchingProblem([1, 1], [2], [[3.0], [4.0]]))
    assert res.cost == 7.0


def test_bmatching_infeasible_reported():
    with pytest.raises(BMatchingInfeasible):
        min_cost_b_matching(BMatchingProblem([2], [1], [[1.0]]))
    with pytest.raises(BMatchingInfeasible):
        min_cost_b_matching(BMatchingProblem([1, 1], [1, 1], [[1.0, np.inf], [1.0, np.inf]]))


def brute_force_b_matching(supplies, caps, cost):
    """Exhaustive search over every integral shipment of each left node's supply."""
    nr = len(caps)
    best = np.inf

    def rec(l, remaining, acc):
        nonlocal best
        if l == len(supplies):
            best = min(best, acc)
            return
        for combo in itertools.combinations_with_replacement(range(nr), supplies[l]):
            take = np.bincount(np.array(combo, dtype=int), minlength=nr)
            if np.all(take <= remaining):
                rec(l + 1, remaining - take, acc + float(cost[l] @ take))

    rec(0, np.array(caps), 0.0)
    return best


@pytest.mark.parametrize("seed", range(100))
def test_bmatching_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    supplies = rng.integers(0, 3, size=5)
    caps = rng.integers(0, 4, size=5)
    while caps.sum() < supplies.sum():
        caps[rng.integers(5)] += 1
    cost = rng.integers(0, 20, size=(5, 5)).astype(float)
    res = min_cost_b_matching(BMatchingProblem(supplies, caps, cost))
    assert res.cost == brute_force_b_matching(supplies.tolist(), caps, cost)
    assert res.flow.dtype.kind == "i"
    assert np.array_equal(res.flow.sum(axis=1), supplies)
    assert np.all(res.flow.sum(axis=0) <= caps)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10 ** 6))
def test_bmatching_flow_is_feasible_and_integral(nl, nr, seed):
    rng = np.random.default_rng(seed)
    supplies = rng.integers(0, 4, size=nl)
    caps = rng.integers(0, 4, size=nr)
    caps[0] += max(0, supplies.sum() - caps.sum())
    cost = rng.uniform(-5, 5, size=(nl, nr))
    res = min_cost_b_matching(BMatchingProblem(supplies, caps, cost))
    assert np.array_equal(res.flow.sum(axis=1), supplies)
    assert np.all(res.flow.sum(axis=0) <= caps) and np.all(res.flow >= 0)
    # LP relaxation of a transportation problem is integral: same optimum
    ref = linprog(cost.ravel(), A_eq=np.kron(np.eye(nl), np.ones(nr)), b_eq=supplies,
                  A_ub=np.kron(np.ones(nl), np.eye(nr)), b_ub=caps, method="highs")
    assert res.cost == pytest.approx(ref.fun, abs=1e-7)


# ---------- dependent rounding ----------

def test_integral_input_unchanged():
    w = np.array([[1, 0, 1], [0, 1, 0]], dtype=float)
    out = dependent_round(w, [2, 1], rng=np.random.default_rng(0))
    assert np.array_equal(out, w.astype(int))


def test_half_half_row_picks_exactly_one():
    rng = np.random.default_rng(1)
    trials = 10_000
    hits = np.zeros(2)
    for _ in range(trials):
        out = dependent_round([[0.5, 0.5]], [1], rng=rng)
        assert out.sum() == 1
        hits += out[0]
    sigma = np.sqrt(trials * 0.25)
    assert np.all(np.abs(hits - trials * 0.5) <= 3 * sigma)


def test_random_matrix_degrees_and_marginals():
    rng = np.random.default_rng(2)
    w = rng.uniform(0, 1, size=(3, 4))
    w /= np.maximum(w.sum(axis=0), 1.0)[None, :] * 1.05
    caps = np.ceil(w.sum(axis=1))
    trials = 10_000
    freq = np.zeros_like(w)
    for _ in range(trials):
        out = dependent_round(w, caps, rng=rng)
        assert np.all(out.sum(axis=0) <= 1)
        assert np.all(out.sum(axis=1) <= caps)
        freq += out
    sigma = np.sqrt(trials * w * (1 - w))
    assert np.all(np.abs(freq - trials * w) <= 4 * sigma + 1e-9)


def test_invalid_input_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        dependent_round([[0.7, 0.7]], [1], rng=rng)
    with pytest.raises(ValueError):
        dependent_round([[0.7], [0.7]], [1, 1], rng=rng)
    with pytest.raises(ValueError):
        dependent_round([[1.2]], [2], rng=rng)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 10 ** 6))
def test_degrees_land_on_floor_or_ceiling(nr, nc, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 1, size=(nr, nc)) * (rng.uniform(size=(nr, nc)) < 0.7)
    w /= np.maximum(w.sum(axis=0), 1.0)[None, :]
    caps = np.ceil(w.sum(axis=1) - 1e-9)
    out = dependent_round(w, caps, rng=rng)
    for sums, got in ((w.sum(axis=0), out.sum(axis=0)), (w.sum(axis=1), out.sum(axis=1))):
        assert np.all(got >= np.floor(sums + 1e-9) - 0) and np.all(got <= np.ceil(sums - 1e-9))
    assert np.all(out[w == 0] == 0) and np.all(out[w == 1] == 1)
