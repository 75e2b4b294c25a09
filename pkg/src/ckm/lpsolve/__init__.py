"""Numerical engines: tableau simplex, sparse feasibility, b-matching, dependent rounding."""
from .bmatching import BMatching, BMatchingInfeasible, BMatchingProblem, min_cost_b_matching
from .dependent import dependent_round
from .simplex import (EQ, GE, LE, LinearProgram, LpNumericalError, LpOutcome, LpStatus,
                      farkas_check, fractional_count, solve_lp)
from .sparse import solve_lp_sparse

__all__ = [
    "BMatching", "BMatchingInfeasible", "BMatchingProblem", "min_cost_b_matching",
    "dependent_round", "EQ", "GE", "LE", "LinearProgram", "LpNumericalError", "LpOutcome",
    "LpStatus", "farkas_check", "fractional_count", "solve_lp", "solve_lp_sparse",
]
