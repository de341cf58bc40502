"""Brute-force LP oracle: enumerate vertices of a small QpProblem with zero Hessian.

Every vertex is the solution of the equality rows plus ``n - rank(A)`` tight
inequality or bound rows. The cheapest feasible one is optimal; its shadow
prices follow from the stationarity system on the tight rows.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

FEASIBILITY_TOL = 1e-7


@dataclass
class OracleResult:
    primal: np.ndarray
    objective: float
    duals_eq: Optional[np.ndarray]
    degenerate: bool


def _inequality_rows(problem):
    """All inequality constraints as ``C x <= d``, bounds included."""
    n = problem.n_variables
    rows = [problem.ineq_matrix]
    rhs = [problem.ineq_rhs]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(problem.bounds_lower[j]):
            rows.append(-e[None, :])
            rhs.append(np.array([-problem.bounds_lower[j]]))
        if np.isfinite(problem.bounds_upper[j]):
            rows.append(e[None, :])
            rhs.append(np.array([problem.bounds_upper[j]]))
    return np.vstack(rows), np.concatenate(rhs)


def solve_lp_by_enumeration(problem) -> Optional[OracleResult]:
    """Return the optimal vertex, or None when no vertex is feasible."""
    if np.any(problem.quadratic_diag != 0):
        raise ValueError("the oracle only handles linear objectives")
    A, b = problem.eq_matrix, problem.eq_rhs
    C, d = _inequality_rows(problem)
    n = problem.n_variables
    k = n - np.linalg.matrix_rank(A)

    best = None
    best_active = None
    for active in combinations(range(C.shape[0]), k):
        M = np.vstack([A, C[list(active)]])
        if np.linalg.matrix_rank(M) < n:
            continue
        rhs = np.concatenate([b, d[list(active)]])
        x = np.linalg.lstsq(M, rhs, rcond=None)[0]
        scale = 1.0 + np.abs(d)
        if np.any(C @ x - d > FEASIBILITY_TOL * scale):
            continue
        if np.abs(A @ x - b).max(initial=0.0) > FEASIBILITY_TOL * (1.0 + np.abs(b).max()):
            continue
        value = problem.objective(x)
        if best is None or value < best[1] - 1e-12 * (1.0 + abs(value)):
            best = (x, value)
            best_active = list(active)

    if best is None:
        return None
    x, value = best

    tight = np.flatnonzero(np.abs(C @ x - d) <= FEASIBILITY_TOL * (1.0 + np.abs(d)))
    degenerate = len(tight) != len(best_active)
    duals = None
    if not degenerate:
        # c - A'y + C_a'z = 0
        M = np.hstack([A.T, -C[best_active].T])
        sol = np.linalg.lstsq(M, problem.linear_cost, rcond=None)[0]
        z = sol[A.shape[0]:]
        if np.any(z <= 1e-7):
            degenerate = True
        else:
            duals = sol[: A.shape[0]]
    return OracleResult(primal=x, objective=value, duals_eq=duals, degenerate=degenerate)
