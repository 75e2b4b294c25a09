"""Numerical tolerances and the derived rounding constants, kept in one place."""
import math

# Absolute feasibility tolerance for LP rows and pipeline invariants.
FEAS_TOL = 1e-7
# A Farkas certificate must evaluate above this to count as a contradiction.
CERT_TOL = 1e-9
# Triangle / symmetry checks on distance matrices.
METRIC_TOL = 1e-9
# Pivot elements below this are never used by the tableau simplex.
PIVOT_TOL = 1e-9
# Values within this of 0 or 1 are snapped when cleaning LP output.
SNAP_TOL = 1e-12
# Clients whose mass inside B is at most this are left out of the B-system.
ZERO_MASS = 1e-12
# Hard cap on the number of enumerated configuration sets S.
MAX_CONFIG_SETS = 2 ** 16
# Opened copies of any facility are capped at this (soft capacities).
MAX_COPIES = 2
# Clustering radius factor: clients within 4 * d_av of a representative.
CLUSTER_RADIUS = 4.0


def ell_for_epsilon(epsilon):
    """Group weight threshold: ceil(5 / eps)."""
    if not 0 < epsilon <= 2:
        raise ValueError(f"epsilon must lie in (0, 2], got {epsilon}")
    return math.ceil(5.0 / epsilon)


def ell1_for(ell):
    """Largest enumerated configuration size."""
    return 2 * ell + 2


def delta_max(ell):
    """Upper bound on the number of rank classes for any B with y_B <= 2 ell.

    Ranks run over 0 .. floor(log2 Y) + 1 where Y = (1 + 1/ell) y_B <= 2 ell + 2.
    """
    return math.floor(math.log2(2 * ell * (1 + 1 / ell))) + 2


def ell2_for(ell):
    """Concentration threshold 9 * ell * delta_max.

    With q >= 1 / (3 delta ell) this gives both 3 / q <= ell2 and
    6 ell delta <= ell2 for every B processed.
    """
    return 9 * ell * delta_max(ell)


# Terms of the cost bound K(ell, ell2) * LP for the configuration rounding.
# Each entry multiplies LP.
#   client_to_facility: moving x_{i,j} demand of unassigned clients to F  -> 1
#   center_local:       2 * sum_v (D(U_v) + 4 D'(U_v)) over every node     -> 2 + 8
#   preassign:          disjoint concentrated sets, cost <= ell2 * D_B      -> ell2
#   center_far:         8 ell * 2 x_{U_p, C~} d(J_p, R \ J_p)
#                       <= 16 ell ell2 pi(J_p) d(J_p, R \ J_p)
#                       <= 16 ell ell2 (4 D(U_p) + 10 D'(U_p))          -> 224 ell ell2
CENTER_FAR_FACTOR = 16 * (4 + 10)


def cost_constant(ell, ell2):
    """K(ell, ell2): the configuration rounding costs at most K * LP."""
    client_to_facility = 1
    center_local = 2 + 8
    preassign = ell2
    center_far = CENTER_FAR_FACTOR * ell * ell2
    return client_to_facility + center_local + preassign + center_far


def cardinality_bound(k, ell):
    """Opened copies allowed for the configuration rounding: floor((1 + 5/ell) k)."""
    return math.floor((1 + 5 / ell) * k + 1e-12)
