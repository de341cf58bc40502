"""DC optimal power flow: QP assembly, solve, and LMP extraction."""

import logging
from typing import Optional, Tuple

import numpy as np

from models import GridCase, OpfSolution, QpStatus, SolverStats

from .exceptions import AssemblyError, GridValidationError, OracleInapplicableError
from .grid_model import require_valid
from .qp_solver import InteriorPointSolver, QpProblem, QpSolution

logger = logging.getLogger(__name__)

DEFAULT_EPSILON_MW = 1e-3


def _check_demand(grid: GridCase, demand) -> np.ndarray:
    demand = np.asarray(demand, dtype=float)
    if demand.shape != (grid.n_buses,):
        raise AssemblyError(
            f"demand vector has shape {demand.shape}, expected ({grid.n_buses},)"
        )
    if not np.all(np.isfinite(demand)):
        raise AssemblyError("demand vector contains non-finite entries")
    return demand


def limited_branches(grid: GridCase):
    """Indices of in-service branches that carry a flow limit."""
    return [
        idx for idx, br in enumerate(grid.branches) if br.in_service and br.is_limited
    ]


def assemble_dcopf(grid: GridCase, demand, check: bool = True) -> QpProblem:
    """
    Build the DC-OPF QP.

    Variables are ``[theta per bus (ascending id), Pg per in-service generator]``.
    Row ``i`` of the equality system is the MW balance of bus ``i`` so its
    dual is the LMP in $/MWh; the last equality pins the reference angle.

    Args:
        grid: Grid snapshot
        demand: Per-bus demand (MW)
        check: Validate the grid first

    Returns:
        Assembled problem

    Raises:
        AssemblyError: invalid grid or mis-sized demand
    """
    if check:
        try:
            require_valid(grid)
        except GridValidationError as e:
            raise AssemblyError(str(e)) from e
    demand = _check_demand(grid, demand)

    index = grid.bus_index()
    n_bus = grid.n_buses
    gens = grid.in_service_generators()
    n_var = n_bus + len(gens)

    quadratic = np.zeros(n_var)
    linear = np.zeros(n_var)
    lower = np.full(n_var, -np.inf)
    upper = np.full(n_var, np.inf)
    constant = 0.0

    eq = np.zeros((n_bus + 1, n_var))
    for col, g in enumerate(gens, start=n_bus):
        gen = grid.generators[g]
        quadratic[col] = 2.0 * gen.cost_c2
        linear[col] = gen.cost_c1
        constant += gen.cost_c0
        lower[col] = gen.p_min_mw
        upper[col] = gen.p_max_mw
        eq[index[gen.at_bus], col] += 1.0

    for br in grid.branches:
        if not br.in_service:
            continue
        f, t = index[br.from_bus], index[br.to_bus]
        b = grid.base_mva / br.reactance_pu
        # injections minus outflow b*(theta_f - theta_t) at f, plus inflow at t
        eq[f, f] -= b
        eq[f, t] += b
        eq[t, f] += b
        eq[t, t] -= b

    eq[n_bus, grid.reference_indices()[0]] = 1.0
    rhs = np.concatenate([demand, [0.0]])

    rows = []
    limits = []
    for k in limited_branches(grid):
        br = grid.branches[k]
        f, t = index[br.from_bus], index[br.to_bus]
        b = grid.base_mva / br.reactance_pu
        row = np.zeros(n_var)
        row[f], row[t] = b, -b
        rows.extend([row, -row])
        limits.extend([br.rate_a_mw, br.rate_a_mw])
    ineq = np.array(rows).reshape(len(rows), n_var)

    names = tuple(f"theta_{bus_id}" for bus_id in grid.bus_ids) + tuple(
        f"pg_{g}" for g in gens
    )
    return QpProblem(
        quadratic_diag=quadratic,
        linear_cost=linear,
        eq_matrix=eq,
        eq_rhs=rhs,
        bounds_lower=lower,
        bounds_upper=upper,
        ineq_matrix=ineq,
        ineq_rhs=np.asarray(limits, dtype=float),
        variable_names=names,
        objective_constant=constant,
    )


def _unsolved(grid: GridCase, status: QpStatus, qp: Optional[QpSolution] = None) -> OpfSolution:
    nan = float("nan")
    return OpfSolution(
        dispatch_mw=[nan] * len(grid.generators),
        angle_rad=[nan] * grid.n_buses,
        flow_mw=[nan] * len(grid.branches),
        lmp=[nan] * grid.n_buses,
        objective=nan,
        stats=SolverStats(
            iterations=qp.iterations if qp else 0,
            duality_gap=qp.duality_gap if qp else nan,
        ),
        status=status,
    )


def solve_dcopf(
    grid: GridCase,
    demand,
    solver: Optional[InteriorPointSolver] = None,
    check: bool = True,
) -> OpfSolution:
    """
    Solve the DC-OPF and read LMPs off the bus balance duals.

    Non-optimal outcomes are returned as a status, never raised; stressed
    scenarios are expected to be infeasible now and then.
    """
    problem = assemble_dcopf(grid, demand, check=check)
    total = float(np.sum(problem.eq_rhs))
    gens = [grid.generators[g] for g in grid.in_service_generators()]
    p_min = sum(gen.p_min_mw for gen in gens)
    p_max = sum(gen.p_max_mw for gen in gens)
    if total < p_min - 1e-9 or total > p_max + 1e-9:
        logger.debug(f"Demand {total:.3f} MW outside generation range [{p_min}, {p_max}]")
        return _unsolved(grid, QpStatus.INFEASIBLE)

    qp = (solver or InteriorPointSolver()).solve(problem)
    if not qp.is_optimal:
        return _unsolved(grid, qp.status, qp)

    n_bus = grid.n_buses
    index = grid.bus_index()
    angles = qp.primal[:n_bus]

    dispatch = np.zeros(len(grid.generators))
    dispatch[grid.in_service_generators()] = qp.primal[n_bus:]

    flows = np.zeros(len(grid.branches))
    for k, br in enumerate(grid.branches):
        if br.in_service:
            delta = angles[index[br.from_bus]] - angles[index[br.to_bus]]
            flows[k] = grid.base_mva * delta / br.reactance_pu

    return OpfSolution(
        dispatch_mw=dispatch.tolist(),
        angle_rad=angles.tolist(),
        flow_mw=flows.tolist(),
        lmp=qp.duals_eq[:n_bus].tolist(),
        objective=qp.objective,
        stats=SolverStats(iterations=qp.iterations, duality_gap=qp.duality_gap),
        status=QpStatus.OPTIMAL,
    )


def branch_slack(grid: GridCase, solution: OpfSolution) -> np.ndarray:
    """Remaining headroom (MW) of every limited in-service branch."""
    return np.array(
        [
            grid.branches[k].rate_a_mw - abs(solution.flow_mw[k])
            for k in limited_branches(grid)
        ]
    )


def is_congested(grid: GridCase, solution: OpfSolution, slack_mw: float = 1e-4) -> bool:
    slack = branch_slack(grid, solution)
    return bool(slack.size and np.min(slack) <= slack_mw)


def sensitivity_tolerance(lmp: float) -> float:
    return max(1e-4, 1e-3 * abs(lmp))


def _optimal_objective(grid, demand, solver, what: str) -> OpfSolution:
    solution = solve_dcopf(grid, demand, solver=solver)
    if not solution.is_optimal:
        raise OracleInapplicableError(
            f"{what} problem is {solution.status.value}", status=solution.status.value
        )
    return solution


def lmp_sensitivity_check(
    grid: GridCase,
    demand,
    bus_index: int,
    epsilon_mw: float = DEFAULT_EPSILON_MW,
    solver: Optional[InteriorPointSolver] = None,
) -> Tuple[float, float]:
    """
    Compare the LMP at a bus with a forward finite difference of the cost.

    Args:
        grid: Grid snapshot
        demand: Per-bus demand (MW)
        bus_index: Dense bus index (ascending id order)
        epsilon_mw: Demand step (MW), must be positive

    Returns:
        ``(lmp, (objective(demand + eps e_bus) - objective(demand)) / eps)``

    Raises:
        ValueError: non-positive epsilon or bus index out of range
        OracleInapplicableError: base or perturbed problem not optimal
    """
    lmp, forward, _ = _finite_differences(
        grid, demand, bus_index, epsilon_mw, solver, backward=False
    )
    return lmp, forward


def two_sided_sensitivity(
    grid: GridCase,
    demand,
    bus_index: int,
    epsilon_mw: float = DEFAULT_EPSILON_MW,
    solver: Optional[InteriorPointSolver] = None,
) -> Tuple[float, float, float]:
    """Return ``(lmp, forward, backward)``; disagreeing estimates flag a degenerate bus."""
    return _finite_differences(grid, demand, bus_index, epsilon_mw, solver, backward=True)


def _finite_differences(grid, demand, bus_index, epsilon_mw, solver, backward):
    if not epsilon_mw > 0:
        raise ValueError(f"epsilon_mw must be positive, got {epsilon_mw}")
    if not 0 <= bus_index < grid.n_buses:
        raise ValueError(f"bus index {bus_index} out of range")
    demand = np.asarray(demand, dtype=float)

    base = _optimal_objective(grid, demand, solver, "base")
    step = np.zeros_like(demand)
    step[bus_index] = epsilon_mw

    up = _optimal_objective(grid, demand + step, solver, "perturbed")
    forward = (up.objective - base.objective) / epsilon_mw
    back = float("nan")
    if backward:
        down = _optimal_objective(grid, demand - step, solver, "perturbed")
        back = (base.objective - down.objective) / epsilon_mw
    return base.lmp[bus_index], forward, back
