"""Primal-dual interior-point solver for convex QPs with diagonal Hessian.

Problem form::

    minimize    1/2 x' diag(q) x + c' x + constant
    subject to  A x = b
                G x <= h
                l <= x <= u        (entries may be infinite)

Dual sign convention: equality duals are d(objective)/d(b); inequality and
bound multipliers are returned non-negative, so that
``d(objective)/d(h) = -duals_ineq``, ``d(objective)/d(l) = duals_lower`` and
``d(objective)/d(u) = -duals_upper``.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgError, LinAlgWarning

from models import QpStatus

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 200
STEP_DAMPING = 0.995

_STALL_WINDOW = 15
_STALL_MIN_ITERATIONS = 25
_DUAL_BLOWUP = 1e12


@dataclass(frozen=True)
class QpProblem:
    """A convex QP with diagonal quadratic term."""

    quadratic_diag: np.ndarray
    linear_cost: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    bounds_lower: np.ndarray
    bounds_upper: np.ndarray
    ineq_matrix: np.ndarray
    ineq_rhs: np.ndarray
    variable_names: Tuple[str, ...] = ()
    objective_constant: float = 0.0

    def __post_init__(self):
        n = len(self.linear_cost)
        checks = [
            (self.quadratic_diag.shape == (n,), "quadratic_diag"),
            (self.bounds_lower.shape == (n,), "bounds_lower"),
            (self.bounds_upper.shape == (n,), "bounds_upper"),
            (self.eq_matrix.ndim == 2 and self.eq_matrix.shape[1] == n, "eq_matrix"),
            (self.eq_rhs.shape == (self.eq_matrix.shape[0],), "eq_rhs"),
            (self.ineq_matrix.ndim == 2 and self.ineq_matrix.shape[1] == n, "ineq_matrix"),
            (self.ineq_rhs.shape == (self.ineq_matrix.shape[0],), "ineq_rhs"),
        ]
        for ok, label in checks:
            if not ok:
                raise ValueError(f"QpProblem: {label} has inconsistent dimensions")
        if self.variable_names and len(self.variable_names) != n:
            raise ValueError("QpProblem: variable_names length does not match")
        if np.any(self.quadratic_diag < 0):
            raise ValueError("QpProblem: quadratic_diag must be non-negative (convexity)")
        if np.any(self.bounds_lower > self.bounds_upper):
            raise ValueError("QpProblem: a lower bound exceeds its upper bound")

    @property
    def n_variables(self) -> int:
        return len(self.linear_cost)

    @property
    def n_equalities(self) -> int:
        return self.eq_matrix.shape[0]

    @property
    def n_inequalities(self) -> int:
        return self.ineq_matrix.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(
            0.5 * np.dot(self.quadratic_diag * x, x)
            + np.dot(self.linear_cost, x)
            + self.objective_constant
        )


@dataclass
class QpSolution:
    primal: np.ndarray
    duals_eq: np.ndarray
    duals_ineq: np.ndarray
    duals_lower: np.ndarray
    duals_upper: np.ndarray
    objective: float
    iterations: int
    duality_gap: float
    status: QpStatus
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    polished: bool = False
    ineq_slack: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def is_optimal(self) -> bool:
        return self.status == QpStatus.OPTIMAL


@dataclass
class _Standardized:
    """Row-equilibrated internal form with bounds kept as index sets."""

    q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lower_idx: np.ndarray
    lower: np.ndarray
    upper_idx: np.ndarray
    upper: np.ndarray
    eq_scale: np.ndarray
    ineq_scale: np.ndarray
    kept_eq_rows: np.ndarray
    fixed_idx: np.ndarray

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m_ineq(self) -> int:
        return len(self.h) + len(self.lower_idx) + len(self.upper_idx)

    def C_times(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([self.G @ x, -x[self.lower_idx], x[self.upper_idx]])

    def Ct_times(self, z: np.ndarray) -> np.ndarray:
        m_g, m_l = len(self.h), len(self.lower_idx)
        out = self.G.T @ z[:m_g]
        np.subtract.at(out, self.lower_idx, z[m_g : m_g + m_l])
        np.add.at(out, self.upper_idx, z[m_g + m_l :])
        return out

    def CtDC(self, d: np.ndarray) -> np.ndarray:
        m_g, m_l = len(self.h), len(self.lower_idx)
        out = (self.G.T * d[:m_g]) @ self.G
        diag = np.zeros(self.n)
        np.add.at(diag, self.lower_idx, d[m_g : m_g + m_l])
        np.add.at(diag, self.upper_idx, d[m_g + m_l :])
        out[np.diag_indices(self.n)] += diag
        return out

    @property
    def d(self) -> np.ndarray:
        return np.concatenate([self.h, -self.lower, self.upper])


def _row_scale(matrix: np.ndarray) -> np.ndarray:
    norms = np.abs(matrix).max(axis=1) if matrix.size else np.zeros(matrix.shape[0])
    scale = np.ones(matrix.shape[0])
    nonzero = norms > 0
    scale[nonzero] = 1.0 / norms[nonzero]
    return scale


class InteriorPointSolver:
    """Mehrotra predictor-corrector interior-point method with optional polish.

    The Newton system is reduced to the (variables, equality duals) saddle
    system, LU-factorized once per iteration and reused for the corrector.
    """

    def __init__(
        self,
        tolerance: float = DEFAULT_TOLERANCE,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        step_damping: float = STEP_DAMPING,
        polish: bool = True,
    ):
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.step_damping = step_damping
        self.polish = polish

    # ---------- setup ----------

    def _standardize(self, problem: QpProblem) -> Optional[_Standardized]:
        lo, up = problem.bounds_lower, problem.bounds_upper
        fixed = np.flatnonzero(np.isfinite(lo) & np.isfinite(up) & (lo == up))
        free_of_fix = np.ones(problem.n_variables, dtype=bool)
        free_of_fix[fixed] = False

        A = problem.eq_matrix.astype(float)
        b = problem.eq_rhs.astype(float)
        norms = np.abs(A).max(axis=1) if A.size else np.zeros(A.shape[0])
        zero_rows = norms == 0
        if np.any(np.abs(b[zero_rows]) > self.tolerance):
            return None
        kept = np.flatnonzero(~zero_rows)
        A, b = A[kept], b[kept]
        if len(fixed):
            fix_rows = np.zeros((len(fixed), problem.n_variables))
            fix_rows[np.arange(len(fixed)), fixed] = 1.0
            A = np.vstack([A, fix_rows])
            b = np.concatenate([b, lo[fixed]])

        eq_scale = _row_scale(A)
        G = problem.ineq_matrix.astype(float)
        ineq_scale = _row_scale(G)

        lower_idx = np.flatnonzero(np.isfinite(lo) & free_of_fix)
        upper_idx = np.flatnonzero(np.isfinite(up) & free_of_fix)
        return _Standardized(
            q=problem.quadratic_diag.astype(float),
            c=problem.linear_cost.astype(float),
            A=A * eq_scale[:, None],
            b=b * eq_scale,
            G=G * ineq_scale[:, None],
            h=problem.ineq_rhs.astype(float) * ineq_scale,
            lower_idx=lower_idx,
            lower=lo[lower_idx].astype(float),
            upper_idx=upper_idx,
            upper=up[upper_idx].astype(float),
            eq_scale=eq_scale,
            ineq_scale=ineq_scale,
            kept_eq_rows=kept,
            fixed_idx=fixed,
        )

    @staticmethod
    def _initial_point(problem: QpProblem, std: _Standardized):
        lo, up = problem.bounds_lower, problem.bounds_upper
        x = np.zeros(std.n)
        both = np.isfinite(lo) & np.isfinite(up)
        only_lo = np.isfinite(lo) & ~np.isfinite(up)
        only_up = ~np.isfinite(lo) & np.isfinite(up)
        x[both] = 0.5 * (lo[both] + up[both])
        x[only_lo] = lo[only_lo] + 1.0
        x[only_up] = up[only_up] - 1.0
        s = np.maximum(std.d - std.C_times(x), 1.0)
        z = np.ones(std.m_ineq)
        y = np.zeros(len(std.b))
        return x, y, s, z

    # ---------- main loop ----------

    def solve(self, problem: QpProblem) -> QpSolution:
        """
        Solve a convex QP.

        Args:
            problem: Problem data

        Returns:
            Solution with status, primal point and duals (original scaling)
        """
        std = self._standardize(problem)
        if std is None:
            logger.debug("Equality system has an empty row with non-zero rhs")
            return self._failed(problem, QpStatus.INFEASIBLE, 0)

        x, y, s, z = self._initial_point(problem, std)
        m = std.m_ineq
        d_vec = std.d
        b_norm = 1.0 + (np.abs(std.b).max() if std.b.size else 0.0)
        d_norm = 1.0 + (np.abs(d_vec).max() if d_vec.size else 0.0)
        c_norm = 1.0 + np.abs(std.c).max(initial=0.0)
        n, me = std.n, len(std.b)

        pres_history = []
        status = QpStatus.ITERATION_LIMIT
        iteration = 0
        gap = float("inf")
        pres = dres = float("inf")

        for iteration in range(self.max_iterations + 1):
            r_d = std.q * x + std.c - std.A.T @ y + std.Ct_times(z)
            r_p = std.A @ x - std.b
            r_i = std.C_times(x) + s - d_vec
            mu = float(s @ z) / m if m else 0.0

            pres = max(
                np.abs(r_p).max(initial=0.0) / b_norm,
                np.abs(r_i).max(initial=0.0) / d_norm,
            )
            dres = np.abs(r_d).max(initial=0.0) / c_norm
            gap = float(s @ z) / (1.0 + abs(problem.objective(x)))
            pres_history.append(pres)

            logger.debug(
                f"ipm iter {iteration}: pres={pres:.3e} dres={dres:.3e} "
                f"gap={gap:.3e} mu={mu:.3e}"
            )

            if pres <= self.tolerance and dres <= self.tolerance and gap <= self.tolerance:
                status = QpStatus.OPTIMAL
                break
            if iteration == self.max_iterations:
                break
            if self._looks_infeasible(pres, pres_history, z, c_norm):
                status = QpStatus.INFEASIBLE
                break

            # reduced saddle system [[H, -A'], [-A, 0]]
            D = z / s if m else np.zeros(0)
            H = std.CtDC(D) if m else np.zeros((n, n))
            H[np.diag_indices(n)] += std.q
            K = np.zeros((n + me, n + me))
            K[:n, :n] = H
            K[:n, n:] = -std.A.T
            K[n:, :n] = -std.A

            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", LinAlgWarning)
                    factor = scipy.linalg.lu_factor(K, check_finite=True)
            except (LinAlgError, ValueError):
                status = self._breakdown_status(pres, pres_history)
                break
            if not np.all(np.abs(np.diag(factor[0])) > 0):
                status = self._breakdown_status(pres, pres_history)
                break

            def newton(r_c):
                tail = (z * r_i - r_c) / s if m else np.zeros(0)
                rhs = np.concatenate([-r_d - std.Ct_times(tail), r_p])
                sol = scipy.linalg.lu_solve(factor, rhs, check_finite=False)
                dx, dy = sol[:n], sol[n:]
                ds = -r_i - std.C_times(dx)
                dz = (-r_c - z * ds) / s if m else np.zeros(0)
                return dx, dy, ds, dz

            # predictor
            dx, dy, ds, dz = newton(s * z)
            if not np.all(np.isfinite(dx)):
                status = self._breakdown_status(pres, pres_history)
                break

            if m:
                alpha_aff = min(_max_step(s, ds), _max_step(z, dz))
                mu_aff = float((s + alpha_aff * ds) @ (z + alpha_aff * dz)) / m
                sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
                # corrector
                dx, dy, ds, dz = newton(s * z + ds * dz - sigma * mu)
                if not np.all(np.isfinite(dx)):
                    status = self._breakdown_status(pres, pres_history)
                    break
                alpha = min(1.0, self.step_damping * min(_max_step(s, ds), _max_step(z, dz)))
            else:
                alpha = 1.0

            x = x + alpha * dx
            y = y + alpha * dy
            if m:
                s = s + alpha * ds
                z = z + alpha * dz

        solution = self._unscale(problem, std, x, y, s, z, status, iteration, gap)
        solution.primal_residual = float(pres)
        solution.dual_residual = float(dres)

        if status == QpStatus.OPTIMAL and self.polish and m:
            polished = self._polish(problem, std, x, y, s, z, iteration)
            if polished is not None:
                return polished
        if status != QpStatus.OPTIMAL:
            logger.debug(f"QP terminated with status {status.value} after {iteration} iterations")
        return solution

    def _looks_infeasible(self, pres, history, z, c_norm) -> bool:
        if pres <= self.tolerance:
            return False
        if z.size and np.max(z) > _DUAL_BLOWUP * c_norm:
            return True
        k = len(history) - 1
        if k >= _STALL_MIN_ITERATIONS and pres > np.sqrt(self.tolerance):
            return pres > 0.5 * history[k - _STALL_WINDOW]
        return False

    def _breakdown_status(self, pres, history) -> QpStatus:
        """Classify a factorization breakdown: a stalled primal residual means infeasible."""
        stalled = (
            len(history) > _STALL_WINDOW
            and pres > np.sqrt(self.tolerance)
            and pres > 0.5 * history[-1 - _STALL_WINDOW]
        )
        return QpStatus.INFEASIBLE if stalled else QpStatus.NUMERICAL_FAILURE

    # ---------- results ----------

    def _failed(self, problem: QpProblem, status: QpStatus, iterations: int) -> QpSolution:
        n = problem.n_variables
        return QpSolution(
            primal=np.full(n, np.nan),
            duals_eq=np.full(problem.n_equalities, np.nan),
            duals_ineq=np.full(problem.n_inequalities, np.nan),
            duals_lower=np.zeros(n),
            duals_upper=np.zeros(n),
            objective=float("nan"),
            iterations=iterations,
            duality_gap=float("nan"),
            status=status,
        )

    def _unscale(self, problem, std, x, y, s, z, status, iterations, gap) -> QpSolution:
        n = problem.n_variables
        y_orig = y * std.eq_scale
        n_kept = len(std.kept_eq_rows)

        duals_eq = np.zeros(problem.n_equalities)
        duals_eq[std.kept_eq_rows] = y_orig[:n_kept]

        m_g, m_l = len(std.h), len(std.lower_idx)
        duals_lower = np.zeros(n)
        duals_upper = np.zeros(n)
        duals_lower[std.lower_idx] = z[m_g : m_g + m_l]
        duals_upper[std.upper_idx] = z[m_g + m_l :]

        fixed_duals = y_orig[n_kept:]
        duals_lower[std.fixed_idx] = np.maximum(fixed_duals, 0.0)
        duals_upper[std.fixed_idx] = np.maximum(-fixed_duals, 0.0)

        return QpSolution(
            primal=x.copy(),
            duals_eq=duals_eq,
            duals_ineq=z[:m_g] * std.ineq_scale,
            duals_lower=duals_lower,
            duals_upper=duals_upper,
            objective=problem.objective(x),
            iterations=iterations,
            duality_gap=float(gap),
            status=status,
            ineq_slack=s[:m_g] / std.ineq_scale if m_g else np.zeros(0),
        )

    def _polish(self, problem, std, x, y, s, z, iterations) -> Optional[QpSolution]:
        """Re-solve the KKT system on the identified active set.

        Returns None when the active set is degenerate or the polished point
        is not primal and dual feasible to 1e-9.
        """
        n, me = std.n, len(std.b)
        active = np.flatnonzero(s < z)
        if me + len(active) > n:
            return None

        # active rows of C as an explicit matrix
        m_g, m_l = len(std.h), len(std.lower_idx)
        C_rows = []
        for j in active:
            if j < m_g:
                C_rows.append(std.G[j])
            else:
                row = np.zeros(n)
                if j < m_g + m_l:
                    row[std.lower_idx[j - m_g]] = -1.0
                else:
                    row[std.upper_idx[j - m_g - m_l]] = 1.0
                C_rows.append(row)
        C_a = np.array(C_rows).reshape(len(active), n)
        d_a = std.d[active]
        k = len(active)

        K = np.zeros((n + me + k, n + me + k))
        K[:n, :n] = np.diag(std.q)
        K[:n, n : n + me] = -std.A.T
        K[:n, n + me :] = C_a.T
        K[n : n + me, :n] = std.A
        K[n + me :, :n] = C_a
        rhs = np.concatenate([-std.c, std.b, d_a])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", LinAlgWarning)
                sol = scipy.linalg.solve(K, rhs)
        except (LinAlgError, LinAlgWarning, ValueError):
            return None
        if not np.all(np.isfinite(sol)):
            return None

        x_p, y_p, z_a = sol[:n], sol[n : n + me], sol[n + me :]
        feas_tol = 1e-9
        z_scale = 1.0 + np.abs(z).max(initial=0.0)
        if np.any(z_a < -feas_tol * z_scale):
            return None
        slack = std.d - std.C_times(x_p)
        if np.any(slack < -feas_tol * (1.0 + np.abs(std.d))):
            return None
        if np.abs(std.A @ x_p - std.b).max(initial=0.0) > feas_tol * (
            1.0 + np.abs(std.b).max(initial=0.0)
        ):
            return None
        if problem.objective(x_p) > problem.objective(x) + self.tolerance * (
            1.0 + abs(problem.objective(x))
        ):
            return None

        z_p = np.zeros_like(z)
        z_p[active] = np.maximum(z_a, 0.0)
        s_p = np.maximum(slack, 0.0)
        gap = float(s_p @ z_p) / (1.0 + abs(problem.objective(x_p)))
        solution = self._unscale(
            problem, std, x_p, y_p, s_p, z_p, QpStatus.OPTIMAL, iterations, gap
        )
        solution.primal_residual = 0.0
        solution.dual_residual = float(
            np.abs(std.q * x_p + std.c - std.A.T @ y_p + std.Ct_times(z_p)).max(initial=0.0)
        )
        solution.polished = True
        return solution


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest alpha in (0, 1] keeping v + alpha * dv non-negative."""
    negative = dv < 0
    if not np.any(negative):
        return 1.0
    return float(min(1.0, np.min(-v[negative] / dv[negative])))


def solve_qp(problem: QpProblem, **options) -> QpSolution:
    """Solve ``problem`` with a fresh InteriorPointSolver built from ``options``."""
    return InteriorPointSolver(**options).solve(problem)
