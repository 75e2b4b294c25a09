"""Sparse phase-1 feasibility through HiGHS, for systems too large for the tableau.

Same outcome contract as :func:`solve_lp`: a feasible point, or a Farkas
certificate built from the phase-1 duals and re-checked by
:func:`farkas_check` before it is returned.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ..constants import CERT_TOL, FEAS_TOL
from .simplex import (EQ, GE, LE, LinearProgram, LpNumericalError, LpOutcome,
                      LpStatus, certificate_from_duals)


def _split(lp):
    A = sparse.csr_matrix(lp.A)
    s = np.array(lp.senses)
    le, ge, eq = np.flatnonzero(s == LE), np.flatnonzero(s == GE), np.flatnonzero(s == EQ)
    return A, le, ge, eq


def solve_lp_sparse(lp: LinearProgram, relax=None) -> LpOutcome:
    """Phase 1 adds violation variables to the rows in ``relax`` (default: all rows).

    Rows left out of ``relax`` are kept hard during phase 1 and must be
    satisfiable on their own. Relaxing only the rows whose right-hand side
    varies turns phase 1 into an L1 projection, so the certificate read from
    its duals is as tight as possible on the varying part.
    """
    A, le, ge, eq = _split(lp)
    m, n = A.shape
    soft = np.ones(m, dtype=bool) if relax is None else np.isin(np.arange(m), relax)
    ub_rows = np.concatenate([le, ge])
    n_ub, n_eq = len(ub_rows), len(eq)
    A_ub = sparse.vstack([A[le], -A[ge]]).tocsr()
    b_ub = np.concatenate([lp.rhs[le], -lp.rhs[ge]])
    A_eq = A[eq]
    soft_ub = np.flatnonzero(soft[ub_rows])
    soft_eq = np.flatnonzero(soft[eq])
    E_ub = -sparse.identity(n_ub, format="csr")[:, soft_ub]
    E_eq = sparse.identity(n_eq, format="csr")[:, soft_eq]
    k_ub, k_eq = len(soft_ub), len(soft_eq)
    A1_ub = sparse.hstack([A_ub, E_ub, sparse.csr_matrix((n_ub, 2 * k_eq))]).tocsr()
    A1_eq = sparse.hstack([A_eq, sparse.csr_matrix((n_eq, k_ub)), E_eq, -E_eq]).tocsr()
    n_e = k_ub + 2 * k_eq
    c1 = np.concatenate([np.zeros(n), np.ones(n_e)])
    bounds = np.column_stack([np.concatenate([lp.lower, np.zeros(n_e)]),
                              np.concatenate([lp.upper, np.full(n_e, np.inf)])])
    res = linprog(c1, A_ub=A1_ub if n_ub else None, b_ub=b_ub if n_ub else None,
                  A_eq=A1_eq if n_eq else None, b_eq=lp.rhs[eq] if n_eq else None,
                  bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise LpNumericalError(f"HiGHS phase 1 failed: {res.message}")
    infeas = float(res.fun)
    if infeas > CERT_TOL:
        mu = np.zeros(m)
        lam = res.ineqlin.marginals if n_ub else np.zeros(0)
        mu[le] = lam[: len(le)]
        mu[ge] = -lam[len(le):]
        if n_eq:
            mu[eq] = res.eqlin.marginals
        cert = certificate_from_duals(lp, mu)
        if cert is not None:
            ray, g_lo, g_hi, _ = cert
            return LpOutcome(LpStatus.INFEASIBLE, farkas_ray=ray, farkas_lower=g_lo,
                             farkas_upper=g_hi)
        if infeas > FEAS_TOL:
            raise LpNumericalError("phase 1 infeasible but no certificate verified")
    x = np.clip(res.x[:n], lp.lower, lp.upper)
    if np.any(lp.objective != 0):
        res2 = linprog(lp.objective, A_ub=A_ub if n_ub else None, b_ub=b_ub if n_ub else None,
                       A_eq=A_eq if n_eq else None, b_eq=lp.rhs[eq] if n_eq else None,
                       bounds=bounds[:n], method="highs-ds")
        if res2.status == 3:
            return LpOutcome(LpStatus.UNBOUNDED)
        if res2.status != 0:
            raise LpNumericalError(f"HiGHS phase 2 failed: {res2.message}")
        x = np.clip(res2.x, lp.lower, lp.upper)
    viol = lp.row_violation(x)
    if viol > FEAS_TOL:
        raise LpNumericalError(f"HiGHS point violates a row by {viol:.3g}")
    return LpOutcome(LpStatus.OPTIMAL, x=x, objective_value=float(lp.objective @ x))
