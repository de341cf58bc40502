import hashlib
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from models import (
    Branch,
    Bus,
    BusKind,
    Generator,
    GridCase,
    Modification,
    ModificationKind,
    ValidationReport,
)

from .exceptions import (
    CaseParseError,
    GridValidationError,
    InvalidModificationError,
    UnsupportedFeatureError,
)

logger = logging.getLogger(__name__)

_FUNCTION_RE = re.compile(r"^function\s+\w+\s*=\s*([^;%\s][^;%]*?)\s*(?:[;%]|$)")
_BASE_MVA_RE = re.compile(r"^mpc\.baseMVA\s*=\s*([^;]+);?")
_TABLE_START_RE = re.compile(r"^mpc\.(\w+)\s*=\s*\[")

# MATPOWER column positions (0-based)
_BUS_MIN_COLS = 3
_GEN_MIN_COLS = 10
_BRANCH_MIN_COLS = 6
_BRANCH_STATUS_COL = 10

_BUS_TYPES = {1: BusKind.LOAD, 2: BusKind.GENERATOR, 3: BusKind.REFERENCE}
_BUS_TYPE_CODES = {kind: code for code, kind in _BUS_TYPES.items()}

_POLYNOMIAL_COST = 2
_PIECEWISE_LINEAR_COST = 1

_Row = Tuple[int, List[float]]


class CaseParser:
    """Parser for the MATPOWER case subset: baseMVA, bus, gen, branch, gencost.

    AC-only columns (resistance, shunts, voltage limits, taps, shifts) are
    read past and ignored.
    """

    REQUIRED_TABLES = ("bus", "gen", "branch", "gencost")

    def __init__(self, text: str, default_name: str = "grid"):
        """
        Initialize the parser.

        Args:
            text: Contents of a MATPOWER-style ``.m`` case file
            default_name: Grid name used when the file has no function header
        """
        self.text = text
        self.default_name = default_name

    def parse(self) -> GridCase:
        """
        Parse the case text into a GridCase.

        Returns:
            Parsed grid

        Raises:
            CaseParseError: malformed or missing table
            UnsupportedFeatureError: piecewise-linear or higher-degree costs,
                isolated buses
            GridValidationError: no reference bus
        """
        name, base_mva, tables = self._scan()

        for table in self.REQUIRED_TABLES:
            if table not in tables:
                raise CaseParseError(f"missing mpc.{table} table")
        if base_mva is None:
            raise CaseParseError("missing mpc.baseMVA")

        buses = [self._bus(row) for row in tables["bus"]]
        generators = self._generators(tables["gen"], tables["gencost"])
        branches = [self._branch(row) for row in tables["branch"]]

        if not any(bus.kind == BusKind.REFERENCE for bus in buses):
            raise GridValidationError(
                "case has no reference bus (bus type 3)", ["no reference bus"]
            )

        grid = GridCase(
            name=name or self.default_name,
            base_mva=base_mva,
            buses=tuple(buses),
            generators=tuple(generators),
            branches=tuple(branches),
        )
        logger.info(
            f"Parsed case '{grid.name}': {len(grid.buses)} buses, "
            f"{len(grid.generators)} generators, {len(grid.branches)} branches"
        )
        return grid

    def _scan(self) -> Tuple[Optional[str], Optional[float], Dict[str, List[_Row]]]:
        name: Optional[str] = None
        base_mva: Optional[float] = None
        tables: Dict[str, List[_Row]] = {}
        current: Optional[str] = None

        for lineno, raw in enumerate(self.text.splitlines(), 1):
            line = raw.split("%", 1)[0].strip()
            if not line:
                continue

            if current is None:
                match = _FUNCTION_RE.match(line)
                if match:
                    name = match.group(1)
                    continue
                match = _BASE_MVA_RE.match(line)
                if match:
                    base_mva = self._number(match.group(1).strip(), lineno)
                    continue
                match = _TABLE_START_RE.match(line)
                if not match:
                    continue
                current = match.group(1)
                tables[current] = []
                line = line[match.end():]

            body, closed = line, False
            if "]" in line:
                body, closed = line.split("]", 1)[0], True
            for piece in body.split(";"):
                tokens = piece.replace(",", " ").split()
                if tokens:
                    values = [self._number(token, lineno) for token in tokens]
                    tables[current].append((lineno, values))
            if closed:
                current = None

        if current is not None:
            raise CaseParseError(f"table mpc.{current} is never closed")
        return name, base_mva, tables

    @staticmethod
    def _number(token: str, lineno: int) -> float:
        try:
            return float(token)
        except ValueError:
            raise CaseParseError(f"cannot read number '{token}'", line=lineno)

    @staticmethod
    def _require(row: _Row, width: int, table: str) -> List[float]:
        lineno, values = row
        if len(values) < width:
            raise CaseParseError(
                f"mpc.{table} row has {len(values)} columns, expected at least {width}",
                line=lineno,
            )
        return values

    def _bus(self, row: _Row) -> Bus:
        values = self._require(row, _BUS_MIN_COLS, "bus")
        code = int(values[1])
        if code == 4:
            raise UnsupportedFeatureError("isolated buses (type 4)", line=row[0])
        if code not in _BUS_TYPES:
            raise CaseParseError(f"unknown bus type {code}", line=row[0])
        bus_id = int(values[0])
        if bus_id <= 0:
            raise CaseParseError(f"bus id {bus_id} must be positive", line=row[0])
        return Bus(id=bus_id, kind=_BUS_TYPES[code], base_demand_mw=values[2])

    def _generators(self, gen_rows: List[_Row], cost_rows: List[_Row]) -> List[Generator]:
        if len(cost_rows) < len(gen_rows):
            lineno = cost_rows[-1][0] if cost_rows else None
            raise CaseParseError(
                f"mpc.gencost has {len(cost_rows)} rows for {len(gen_rows)} generators",
                line=lineno,
            )

        generators = []
        # rows beyond the generator count carry reactive costs
        for gen_row, cost_row in zip(gen_rows, cost_rows):
            values = self._require(gen_row, _GEN_MIN_COLS, "gen")
            c2, c1, c0 = self._polynomial_cost(cost_row)
            generators.append(
                Generator(
                    at_bus=int(values[0]),
                    p_min_mw=values[9],
                    p_max_mw=values[8],
                    cost_c2=c2,
                    cost_c1=c1,
                    cost_c0=c0,
                    in_service=values[7] > 0,
                )
            )
        return generators

    def _polynomial_cost(self, row: _Row) -> Tuple[float, float, float]:
        lineno, values = row
        values = self._require(row, 4, "gencost")
        model = int(values[0])
        if model == _PIECEWISE_LINEAR_COST:
            raise UnsupportedFeatureError(
                "piecewise-linear generator costs are not supported", line=lineno
            )
        if model != _POLYNOMIAL_COST:
            raise CaseParseError(f"unknown cost model {model}", line=lineno)

        n_terms = int(values[3])
        if n_terms > 3:
            raise UnsupportedFeatureError(
                f"polynomial cost of degree {n_terms - 1} (max 2)", line=lineno
            )
        coefficients = values[4 : 4 + n_terms]
        if len(coefficients) < n_terms:
            raise CaseParseError("gencost row is shorter than its term count", line=lineno)

        padded = [0.0] * (3 - n_terms) + list(coefficients)
        return padded[0], padded[1], padded[2]

    def _branch(self, row: _Row) -> Branch:
        values = self._require(row, _BRANCH_MIN_COLS, "branch")
        status = values[_BRANCH_STATUS_COL] if len(values) > _BRANCH_STATUS_COL else 1.0
        return Branch(
            from_bus=int(values[0]),
            to_bus=int(values[1]),
            reactance_pu=values[3],
            rate_a_mw=values[5],
            in_service=status > 0,
        )


def parse_case(text: str, default_name: str = "grid") -> GridCase:
    """Parse MATPOWER-style case text into a GridCase."""
    return CaseParser(text, default_name=default_name).parse()


def load_case(path) -> GridCase:
    """Read and parse a case file; the file stem names grids without a header."""
    path = Path(path)
    logger.info(f"Loading case file: {path}")
    return parse_case(path.read_text(encoding="utf-8"), default_name=path.stem)


def _num(value: float) -> str:
    return format(float(value), ".17g")


def format_case(grid: GridCase) -> str:
    """
    Write a grid back out in the MATPOWER subset understood by ``parse_case``.

    Args:
        grid: Grid to serialize

    Returns:
        Case file text
    """
    lines = [
        f"function mpc = {grid.name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {_num(grid.base_mva)};",
        "",
        "%% bus data",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    for bus in grid.buses:
        lines.append(
            f"\t{bus.id}\t{_BUS_TYPE_CODES[bus.kind]}\t{_num(bus.base_demand_mw)}"
            "\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;"
        )
    lines += [
        "];",
        "",
        "%% generator data",
        "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
        "mpc.gen = [",
    ]
    for gen in grid.generators:
        lines.append(
            f"\t{gen.at_bus}\t0\t0\t0\t0\t1\t{_num(grid.base_mva)}"
            f"\t{int(gen.in_service)}\t{_num(gen.p_max_mw)}\t{_num(gen.p_min_mw)};"
        )
    lines += [
        "];",
        "",
        "%% branch data",
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
        "mpc.branch = [",
    ]
    for br in grid.branches:
        rate = _num(br.rate_a_mw)
        lines.append(
            f"\t{br.from_bus}\t{br.to_bus}\t0\t{_num(br.reactance_pu)}\t0"
            f"\t{rate}\t{rate}\t{rate}\t0\t0\t{int(br.in_service)}\t-360\t360;"
        )
    lines += [
        "];",
        "",
        "%% generator cost data",
        "%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0",
        "mpc.gencost = [",
    ]
    for gen in grid.generators:
        lines.append(
            f"\t2\t0\t0\t3\t{_num(gen.cost_c2)}\t{_num(gen.cost_c1)}\t{_num(gen.cost_c0)};"
        )
    lines += ["];", ""]
    return "\n".join(lines)


def grid_to_json(grid: GridCase) -> str:
    """Canonical JSON archive of a grid."""
    return grid.model_dump_json()


def grid_from_json(text: str) -> GridCase:
    return GridCase.model_validate_json(text)


def grid_hash(grid: GridCase) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(grid_to_json(grid).encode("utf-8")).hexdigest()


def base_demand(grid: GridCase) -> np.ndarray:
    """Dense per-bus base demand vector (MW), ordered by bus index."""
    return np.array([bus.base_demand_mw for bus in grid.buses], dtype=float)


def is_connected(grid: GridCase) -> bool:
    """True iff the in-service branches connect every bus of the grid."""
    n = grid.n_buses
    if n <= 1:
        return True

    index = grid.bus_index()
    rows, cols = [], []
    for br in grid.branches:
        if br.in_service and br.from_bus in index and br.to_bus in index:
            rows.append(index[br.from_bus])
            cols.append(index[br.to_bus])
    if not rows:
        return False

    adjacency = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_components, _ = connected_components(adjacency, directed=False)
    return n_components == 1


def validate(grid: GridCase) -> ValidationReport:
    """
    Check the structural invariants of a grid.

    Args:
        grid: Grid to check

    Returns:
        Report whose ``violations`` list is empty iff the grid is valid
    """
    report = ValidationReport()
    ids = grid.bus_ids
    known = set(ids)

    if len(known) != len(ids):
        report.violations.append("bus ids are not unique")

    n_reference = len(grid.reference_indices())
    if n_reference != 1:
        report.violations.append(
            f"expected exactly one reference bus, found {n_reference}"
        )

    for bus in grid.buses:
        if not np.isfinite(bus.base_demand_mw):
            report.violations.append(f"bus {bus.id}: non-finite demand")
        elif bus.base_demand_mw < 0:
            report.warnings.append(f"bus {bus.id}: negative base demand")

    for idx, gen in enumerate(grid.generators):
        if gen.at_bus not in known:
            report.violations.append(f"generator {idx}: unknown bus {gen.at_bus}")
        if gen.p_min_mw > gen.p_max_mw:
            report.violations.append(
                f"generator {idx}: p_min {gen.p_min_mw} exceeds p_max {gen.p_max_mw}"
            )
        if gen.cost_c2 < 0:
            report.violations.append(f"generator {idx}: negative quadratic cost")
        if not all(np.isfinite([gen.p_min_mw, gen.p_max_mw, gen.cost_c2, gen.cost_c1])):
            report.violations.append(f"generator {idx}: non-finite limits or costs")

    if not grid.in_service_generators():
        report.violations.append("no generator in service")

    endpoints_ok = True
    for idx, br in enumerate(grid.branches):
        if br.from_bus not in known or br.to_bus not in known:
            report.violations.append(
                f"branch {idx}: unknown endpoint ({br.from_bus}, {br.to_bus})"
            )
            endpoints_ok = False
        if br.from_bus == br.to_bus:
            report.violations.append(f"branch {idx}: from_bus equals to_bus")
        if not br.reactance_pu > 0:
            report.violations.append(
                f"branch {idx}: reactance {br.reactance_pu} must be positive"
            )
        if br.rate_a_mw < 0:
            report.violations.append(f"branch {idx}: negative rating")

    if endpoints_ok and not is_connected(grid):
        report.violations.append("in-service branches do not connect all buses")

    if report.violations:
        logger.debug(f"Grid '{grid.name}' has {len(report.violations)} violations")
    return report


def require_valid(grid: GridCase) -> None:
    """Raise GridValidationError when ``validate`` reports violations."""
    report = validate(grid)
    if not report.is_valid:
        raise GridValidationError(
            f"grid '{grid.name}' is invalid: {'; '.join(report.violations)}",
            report.violations,
        )


def apply_modification(grid: GridCase, modification: Modification) -> GridCase:
    """
    Return an edited copy of the grid; the input is never mutated.

    Args:
        grid: Grid to edit
        modification: Edit to apply

    Returns:
        Edited grid (the same object for ``Modification.none()``)

    Raises:
        InvalidModificationError: index out of range, element already out of
            service, or removal of the last in-service generator
    """
    kind = modification.kind

    if kind == ModificationKind.NONE:
        return grid

    if kind == ModificationKind.DERATE_ALL_BRANCHES:
        factor = 1.0 - modification.fraction
        branches = tuple(
            br.model_copy(update={"rate_a_mw": br.rate_a_mw * factor})
            if br.is_limited
            else br
            for br in grid.branches
        )
        return grid.model_copy(update={"branches": branches})

    index = modification.index
    if kind == ModificationKind.REMOVE_BRANCH:
        if index >= len(grid.branches) or not grid.branches[index].in_service:
            raise InvalidModificationError(f"branch {index} is not an in-service branch")
        branches = list(grid.branches)
        branches[index] = branches[index].model_copy(update={"in_service": False})
        return grid.model_copy(update={"branches": tuple(branches)})

    if kind == ModificationKind.REMOVE_GENERATOR:
        if index >= len(grid.generators) or not grid.generators[index].in_service:
            raise InvalidModificationError(
                f"generator {index} is not an in-service generator"
            )
        if len(grid.in_service_generators()) <= 1:
            raise InvalidModificationError("cannot remove the last in-service generator")
        generators = list(grid.generators)
        generators[index] = generators[index].model_copy(update={"in_service": False})
        return grid.model_copy(update={"generators": tuple(generators)})

    raise InvalidModificationError(f"unknown modification kind {kind}")


def summarize(grid: GridCase) -> str:
    """One-line element count summary."""
    return (
        f"{len(grid.buses)} buses, {len(grid.generators)} generators, "
        f"{len(grid.branches)} branches"
    )
