"""Dense bounded-variable tableau simplex with Bland's rule.

Returns basic (vertex) solutions, and for infeasible programs a Farkas
certificate read off the phase-1 duals.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..constants import CERT_TOL, FEAS_TOL, PIVOT_TOL

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)


class LpNumericalError(RuntimeError):
    """The solver lost numerical control; the answer would not be trustworthy."""


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """minimize objective @ x  s.t.  A x (senses) rhs,  lower <= x <= upper.

    ``A`` may be a dense array or a scipy sparse matrix.
    """
    objective: np.ndarray
    A: object
    senses: list
    rhs: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = len(self.objective)
        if not sparse.issparse(self.A):
            self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.senses = list(self.senses)
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        m = self.A.shape[0]
        if self.A.shape[1] != n or len(self.rhs) != m or len(self.senses) != m:
            raise ValueError("row widths, rhs and senses must agree with the objective")
        if any(s not in _SENSES for s in self.senses):
            raise ValueError(f"senses must be one of {_SENSES}")
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("bounds must match the number of variables")
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def from_rows(cls, objective, rows, bounds=None):
        """Build from ``rows = [(coeffs, sense, rhs), ...]`` and optional ``[(lo, hi), ...]``."""
        objective = np.asarray(objective, dtype=float)
        n = len(objective)
        A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), n)
        senses = [r[1] for r in rows]
        rhs = [r[2] for r in rows]
        lower = upper = None
        if bounds is not None:
            lower = [b[0] for b in bounds]
            upper = [np.inf if b[1] is None else b[1] for b in bounds]
        return cls(objective, A, senses, rhs, lower, upper)

    @property
    def n_rows(self):
        return self.A.shape[0]

    @property
    def n_vars(self):
        return len(self.objective)

    def dense(self):
        return self.A.toarray() if sparse.issparse(self.A) else self.A

    def row_violation(self, x):
        """Largest violation of any row or bound at ``x``."""
        ax = self.A @ x
        s = np.array(self.senses)
        viol = np.zeros(len(ax))
        viol[s == LE] = np.maximum(ax - self.rhs, 0)[s == LE]
        viol[s == GE] = np.maximum(self.rhs - ax, 0)[s == GE]
        viol[s == EQ] = np.abs(ax - self.rhs)[s == EQ]
        bound = np.maximum(self.lower - x, 0).max(initial=0.0)
        bound = max(bound, np.maximum(x - self.upper, 0).max(initial=0.0))
        return max(viol.max(initial=0.0), bound)


@dataclass
class LpOutcome:
    status: LpStatus
    x: np.ndarray = None
    objective_value: float = None
    # Farkas certificate, every row read as a >= inequality (<= rows negated).
    # Entries are nonnegative for inequality rows; equality rows may take either sign.
    farkas_ray: np.ndarray = None
    farkas_lower: np.ndarray = None
    farkas_upper: np.ndarray = None
    pivots: int = 0
    basis: list = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status is LpStatus.OPTIMAL

    @property
    def infeasible(self):
        return self.status is LpStatus.INFEASIBLE


def orientation(senses):
    """+1 for rows already of the form a x >= b (and equalities), -1 for <= rows."""
    return np.array([-1.0 if s == LE else 1.0 for s in senses])


def certificate_from_duals(lp: LinearProgram, mu: np.ndarray):
    """Turn row multipliers ``mu`` (on ``a_r x ~ b_r`` as written) into a Farkas certificate.

    Returns ``(ray, g_lower, g_upper, value)`` normalized to unit max-norm, or
    ``None`` when the multipliers do not combine into a contradiction.
    """
    v = np.asarray(lp.A.T @ mu).ravel()
    g_lo = np.maximum(-v, 0.0)
    g_hi = np.maximum(v, 0.0)
    g_hi[~np.isfinite(lp.upper)] = 0.0
    ray = mu * orientation(lp.senses)
    scale = max(np.abs(ray).max(initial=0.0), g_lo.max(initial=0.0), g_hi.max(initial=0.0))
    if scale <= 0:
        return None
    ray, g_lo, g_hi = ray / scale, g_lo / scale, g_hi / scale
    residual, value = farkas_check(lp, ray, g_lo, g_hi)
    if residual > FEAS_TOL or value <= CERT_TOL:
        return None
    return ray, g_lo, g_hi, value


def farkas_check(lp: LinearProgram, ray, g_lower, g_upper):
    """Independently re-evaluate a certificate.

    Returns ``(residual, value)``: ``residual`` is the largest |component| of the
    combined homogeneous left side plus any sign violation of the multipliers,
    ``value`` is the combined right side (a contradiction needs ``value > 0``).
    """
    ori = orientation(lp.senses)
    mu = ray * ori
    combo = np.asarray(lp.A.T @ mu).ravel() + g_lower - g_upper
    residual = np.abs(combo).max(initial=0.0)
    sign_bad = 0.0
    ineq = np.array([s != EQ for s in lp.senses])
    if ineq.any():
        sign_bad = max(sign_bad, np.maximum(-ray[ineq], 0).max())
    sign_bad = max(sign_bad, np.maximum(-g_lower, 0).max(initial=0.0),
                   np.maximum(-g_upper, 0).max(initial=0.0))
    if np.any(g_upper[~np.isfinite(lp.upper)] != 0):
        sign_bad = np.inf
    upper = np.where(np.isfinite(lp.upper), lp.upper, 0.0)
    value = float(mu @ lp.rhs + g_lower @ lp.lower - g_upper @ upper)
    return max(residual, sign_bad), value


class _Tableau:
    """Working state: T = B^-1 [A | slacks | artificials], basic values xB."""

    refactor_every = 100

    def __init__(self, full, b, ub, basis):
        self.full = full
        self.b = b
        self.T = full.copy()
        self.ub = ub
        self.basis = list(basis)
        self.init_basis = list(basis)
        self.xB = b.copy()
        self.at_upper = np.zeros(full.shape[1], dtype=bool)
        self.is_basic = np.zeros(full.shape[1], dtype=bool)
        self.is_basic[self.basis] = True
        self.pivots = 0

    def values(self):
        x = np.where(self.at_upper, self.ub, 0.0)
        x[self.basis] = self.xB
        return x

    def refactor(self):
        B = self.full[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.full)
            upper_cols = np.nonzero(self.at_upper & ~self.is_basic)[0]
            rhs = self.b - self.full[:, upper_cols] @ self.ub[upper_cols]
            self.xB = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError as exc:
            raise LpNumericalError(f"singular basis: {exc}") from None

    def binv(self):
        """Columns of B^-1, read from the initial identity columns."""
        return self.T[:, self.init_basis]

    def run(self, cost, allowed, max_pivots):
        """Bland's-rule primal simplex. Returns 'optimal' or 'unbounded'."""
        m = len(self.basis)
        while True:
            d = cost - cost[self.basis] @ self.T
            elig = allowed & ~self.is_basic & (
                (~self.at_upper & (d < -1e-9)) | (self.at_upper & (d > 1e-9)))
            cand = np.flatnonzero(elig)
            if len(cand) == 0:
                return "optimal"
            j = int(cand[0])
            col = self.T[:, j]
            dirv = -col if self.at_upper[j] else col
            theta = self.ub[j]
            ratios = np.full(m, np.inf)
            dec = dirv > PIVOT_TOL
            ratios[dec] = np.maximum(self.xB[dec], 0.0) / dirv[dec]
            ub_b = self.ub[self.basis]
            inc = (dirv < -PIVOT_TOL) & np.isfinite(ub_b)
            ratios[inc] = np.maximum(ub_b[inc] - self.xB[inc], 0.0) / -dirv[inc]
            best = ratios.min(initial=np.inf)
            if theta <= best:
                if not np.isfinite(theta):
                    return "unbounded"
                # bound flip of the entering variable, no basis change
                self.xB -= theta * dirv
                self.at_upper[j] = not self.at_upper[j]
                continue
            ties = np.flatnonzero(ratios <= best + 1e-12)
            # among tied rows keep only well-sized pivots, then apply Bland
            mag = np.abs(dirv[ties])
            ties = ties[mag >= 1e-3 * mag.max()]
            r = int(min(ties, key=lambda t: self.basis[t]))
            step = best
            leaving = self.basis[r]
            hits_upper = dirv[r] < 0
            entering_val = self.ub[j] - step if self.at_upper[j] else step
            self.xB -= step * dirv
            piv = self.T[r, j]
            if abs(piv) < PIVOT_TOL:
                raise LpNumericalError(f"pivot element {piv:.3g} too small")
            prow = self.T[r] / piv
            colj = self.T[:, j].copy()
            self.T -= np.outer(colj, prow)
            self.T[r] = prow
            self.xB[r] = entering_val
            self.basis[r] = j
            self.is_basic[j] = True
            self.is_basic[leaving] = False
            self.at_upper[j] = False
            self.at_upper[leaving] = bool(hits_upper)
            self.pivots += 1
            if self.pivots > max_pivots:
                raise LpNumericalError("pivot limit reached")
            if self.pivots % self.refactor_every == 0:
                self.refactor()


def solve_lp(lp: LinearProgram, max_pivots: int = 200_000) -> LpOutcome:
    """Two-phase bounded simplex; Optimal outcomes are vertices of the polytope."""
    A = lp.dense()
    m, n = A.shape
    lo, hi = lp.lower, lp.upper
    b = lp.rhs - A @ lo
    ub_struct = hi - lo
    senses = lp.senses
    ineq_rows = [r for r in range(m) if senses[r] != EQ]
    S = np.zeros((m, len(ineq_rows)))
    for k, r in enumerate(ineq_rows):
        S[r, k] = 1.0 if senses[r] == LE else -1.0
    M = np.hstack([A, S])
    flip = np.where(b < 0, -1.0, 1.0)
    M *= flip[:, None]
    b = b * flip
    basis = [None] * m
    for k, r in enumerate(ineq_rows):
        if M[r, n + k] > 0:
            basis[r] = n + k
    art_rows = [r for r in range(m) if basis[r] is None]
    Art = np.zeros((m, len(art_rows)))
    n_sa = n + len(ineq_rows)
    for k, r in enumerate(art_rows):
        Art[r, k] = 1.0
        basis[r] = n_sa + k
    full = np.hstack([M, Art])
    N = full.shape[1]
    ub = np.concatenate([ub_struct, np.full(N - n, np.inf)])
    tab = _Tableau(full, b, ub, basis)

    art = np.zeros(N, dtype=bool)
    art[n_sa:] = True
    if art_rows:
        cost1 = art.astype(float)
        tab.run(cost1, np.ones(N, dtype=bool), max_pivots)
        tab.refactor()
        infeas = float(cost1 @ tab.values())
        if infeas > CERT_TOL:
            pi = cost1[tab.basis] @ tab.binv()
            cert = certificate_from_duals(lp, pi * flip)
            if cert is not None:
                ray, g_lo, g_hi, _ = cert
                return LpOutcome(LpStatus.INFEASIBLE, farkas_ray=ray, farkas_lower=g_lo,
                                 farkas_upper=g_hi, pivots=tab.pivots)
            if infeas > FEAS_TOL:
                raise LpNumericalError("phase 1 ended infeasible but no certificate verified")
        tab.ub[art] = 0.0

    cost2 = np.zeros(N)
    cost2[:n] = lp.objective
    status = tab.run(cost2, ~art, max_pivots)
    if status == "unbounded":
        return LpOutcome(LpStatus.UNBOUNDED, pivots=tab.pivots)
    tab.refactor()
    if np.linalg.cond(full[:, tab.basis]) > 1e13:
        raise LpNumericalError("ill-conditioned final basis")
    x = lo + tab.values()[:n]
    # snap basic values that drifted through their bounds
    x = np.clip(x, lo, hi)
    viol = lp.row_violation(x)
    if viol > FEAS_TOL:
        raise LpNumericalError(f"returned point violates a row by {viol:.3g}")
    return LpOutcome(LpStatus.OPTIMAL, x=x, objective_value=float(lp.objective @ x),
                     pivots=tab.pivots, basis=[c for c in tab.basis])


def fractional_count(x, lower, upper, tol=1e-9):
    """Number of entries strictly inside their bounds."""
    return int(np.sum((x > lower + tol) & (x < upper - tol)))
