"""The basic relaxation: opening variables y_i, assignment variables x_{i,j}.

Variables are laid out as x (facility-major, nF * nC entries) followed by y.
Accumulated cuts from configuration separation are appended as extra rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import FEAS_TOL, SNAP_TOL
from .instance import Instance
from .lpsolve import EQ, LE, LinearProgram, LpNumericalError, solve_lp


class MasterInfeasible(RuntimeError):
    """The basic LP with its cuts has no solution; ``cut_index`` names the culprit if known."""

    def __init__(self, message, cut_index=None):
        super().__init__(message)
        self.cut_index = cut_index


@dataclass
class Cut:
    """The linear inequality ``const + <coef_x, x> + <coef_y, y> <= 0``."""
    coef_x: np.ndarray
    coef_y: np.ndarray
    const: float
    origin: tuple = ()

    def evaluate(self, x, y) -> float:
        return float(self.const + np.sum(self.coef_x * x) + self.coef_y @ y)


@dataclass
class FractionalSolution:
    x: np.ndarray
    y: np.ndarray
    lp_value: float

    def constraint_violation(self, inst: Instance) -> float:
        """Largest violation of the basic constraints at (x, y)."""
        x, y = self.x, self.y
        viol = [y.sum() - inst.k,
                np.abs(x.sum(axis=0) - 1).max(),
                (x - y[:, None]).max(),
                (x.sum(axis=1) - inst.capacities * y).max(),
                -x.min(), -y.min(), x.max() - 1, y.max() - 1]
        return max(0.0, max(float(v) for v in viol))


@dataclass
class CostShares:
    d_av: np.ndarray
    D: np.ndarray
    Dprime: np.ndarray


def build_basic_lp(inst: Instance, cuts=()) -> LinearProgram:
    nf, nc = inst.n_facilities, inst.n_clients
    nx = nf * nc
    n = nx + nf
    d = inst.fc()
    objective = np.concatenate([d.ravel(), np.zeros(nf)])

    def xi(i, j):
        return i * nc + j

    coeffs, senses, rhs = [], [], []

    def add(entries, sense, b):
        row = np.zeros(n)
        for c, v in entries:
            row[c] = v
        coeffs.append(row)
        senses.append(sense)
        rhs.append(b)

    add([(nx + i, 1.0) for i in range(nf)], LE, float(inst.k))
    for j in range(nc):
        add([(xi(i, j), 1.0) for i in range(nf)], EQ, 1.0)
    for i in range(nf):
        for j in range(nc):
            add([(xi(i, j), 1.0), (nx + i, -1.0)], LE, 0.0)
    for i in range(nf):
        add([(xi(i, j), 1.0) for j in range(nc)] + [(nx + i, -float(inst.capacities[i]))], LE, 0.0)
    A = np.array(coeffs)
    if cuts:
        C = np.array([np.concatenate([np.ravel(c.coef_x), c.coef_y]) for c in cuts])
        A = np.vstack([A, C])
        senses += [LE] * len(cuts)
        rhs += [-c.const for c in cuts]
    return LinearProgram(objective, A, senses, np.array(rhs), np.zeros(n), np.ones(n))


def _clean(v):
    v = np.clip(v, 0.0, 1.0)
    v[v <= SNAP_TOL] = 0.0
    v[v >= 1 - SNAP_TOL] = 1.0
    return v


def solve_basic(inst: Instance, cuts=()) -> FractionalSolution:
    """Vertex optimum of the basic LP with ``cuts`` appended."""
    lp = build_basic_lp(inst, cuts)
    out = solve_lp(lp)
    if out.infeasible:
        n_base = lp.n_rows - len(cuts)
        ray = out.farkas_ray
        involved = [t for t in range(len(cuts)) if abs(ray[n_base + t]) > 1e-9]
        culprit = involved[-1] if involved else None
        raise MasterInfeasible(f"basic LP infeasible; certificate uses cuts {involved}", culprit)
    if not out.optimal:
        raise LpNumericalError(f"basic LP returned status {out.status.value}")
    nf, nc = inst.n_facilities, inst.n_clients
    x = _clean(out.x[: nf * nc].reshape(nf, nc))
    y = _clean(out.x[nf * nc:])
    frac = FractionalSolution(x, y, float((inst.fc() * x).sum()))
    viol = frac.constraint_violation(inst)
    if viol > FEAS_TOL:
        raise LpNumericalError(f"basic LP solution violates a constraint by {viol:.3g}")
    return frac


def cost_shares(inst: Instance, frac: FractionalSolution) -> CostShares:
    d = inst.fc()
    d_av = (frac.x * d).sum(axis=0)
    D = (frac.x * d).sum(axis=1)
    Dprime = frac.x @ d_av
    return CostShares(d_av, D, Dprime)
