"""
LP relaxation of the RTV assignment ILP, solved by a dense revised simplex.

Rows are one equality per request followed by one per vehicle; columns
are the admissible (trip, vehicle) pairs ordered by (vehicle id, trip id).
The covering form (requests >= 1, vehicles <= 1) is used when a
non-negative dual is needed; its vehicle rows are priced relative to the
empty trip so both forms share the same optimum.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from model import DualSolution, FractionalSolution, Instance, TripCatalog
from utils import get_logger

logger = get_logger(__name__)

FEASIBILITY_TOLERANCE = 1e-9
OPTIMALITY_TOLERANCE = 1e-9
PIVOT_TOLERANCE = 1e-11
PHASE1_TOLERANCE = 1e-7
SUPPORT_THRESHOLD = 1e-7
INTEGRAL_TOLERANCE = 1e-6
REFACTOR_INTERVAL = 50
# Values below this are dropped from reported primal solutions.
ZERO_TOLERANCE = 1e-12


class LPForm(str, Enum):
    EQUALITY = "equality"
    COVERING = "covering"


class NumericalFailure(RuntimeError):
    """The simplex method hit a pivot too small to trust or failed to converge."""

    pass


@dataclass(frozen=True, eq=False)
class StandardFormLP:
    """
    min c.x + offset  s.t.  A x (=, or >= / <=) 1,  x >= 0.

    columns[j] is the (trip id, vehicle id) of column j. Rows are
    request_rows followed by vehicle_rows.
    """

    A: np.ndarray
    c: np.ndarray
    columns: Tuple[Tuple[int, int], ...]
    request_rows: Tuple[int, ...]
    vehicle_rows: Tuple[int, ...]
    catalog: TripCatalog
    form: LPForm = LPForm.EQUALITY
    offset: float = 0.0
    empty_costs: Dict[int, float] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.request_rows) + len(self.vehicle_rows)

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    def column_cost(self, j: int) -> float:
        """Original catalog cost c_tv of column j."""
        tid, vid = self.columns[j]
        return self.catalog.cost(tid, vid)

    def restrict(
        self, fixed_zero: Iterable[int], fixed_one: Iterable[int]
    ) -> Tuple[Optional["StandardFormLP"], List[int]]:
        """
        Sub-problem with some equality-form columns fixed.

        Fixing a column to one removes its rows, every column sharing one of
        those rows, and adds its cost to the offset.

        Args:
            fixed_zero: Column indices fixed to 0
            fixed_one: Column indices fixed to 1

        Returns:
            (restricted LP or None if the fixings conflict, kept column indices)
        """
        fixed_one = sorted(set(fixed_one))
        removed_rows = np.zeros(self.n_rows, dtype=bool)
        for j in fixed_one:
            rows = self.A[:, j] > 0
            if np.any(removed_rows & rows):
                return None, []
            removed_rows |= rows
        excluded = set(fixed_zero) | set(fixed_one)
        touches = (self.A[removed_rows, :] > 0).any(axis=0)
        keep = [j for j in range(self.n_cols) if j not in excluded and not touches[j]]
        rows = np.flatnonzero(~removed_rows)
        n_req = len(self.request_rows)
        sub = replace(
            self,
            A=self.A[np.ix_(rows, keep)],
            c=self.c[keep],
            columns=tuple(self.columns[j] for j in keep),
            request_rows=tuple(self.request_rows[i] for i in rows if i < n_req),
            vehicle_rows=tuple(
                self.vehicle_rows[i - n_req] for i in rows if i >= n_req
            ),
            offset=self.offset + math.fsum(self.c[j] for j in fixed_one),
        )
        return sub, keep


@dataclass(frozen=True, eq=False)
class LPResult:
    """
    Outcome of solve_lp.

    x is aligned with lp.columns. For an infeasible LP, farkas holds the
    phase-1 multipliers: every column with profit - z_v > 0 under them
    would reduce the infeasibility.
    """

    status: str
    primal: Optional[FractionalSolution]
    dual: Optional[DualSolution]
    x: Optional[np.ndarray]
    objective: float
    iterations: int
    farkas: Optional[DualSolution] = None
    trace: Tuple[Tuple[float, float], ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class SupportHistogram:
    """Distribution of supported LP values over equal-width bins of (0, 1]."""

    bin_edges: Tuple[float, ...]
    counts: Tuple[int, ...]
    non_integral_counts: Tuple[int, ...]
    n_supported: int
    integral_fraction: float
    half_integral_fraction: float


def build_lp(
    catalog: TripCatalog,
    instance: Optional[Instance] = None,
    form: LPForm = LPForm.EQUALITY,
) -> StandardFormLP:
    """
    Build the LP relaxation of the assignment ILP from a catalog.

    Args:
        catalog: Validated trip catalog
        instance: Instance whose requests define the request rows (default:
            the catalog's request ids)
        form: Equality form, or covering/packing form with empty-trip-relative costs

    Returns:
        StandardFormLP with columns sorted by (vehicle id, trip id)
    """
    request_rows = tuple(
        sorted(instance.request_ids if instance is not None else catalog.request_ids)
    )
    vehicle_rows = tuple(catalog.vehicle_ids)
    row_of = {r: i for i, r in enumerate(request_rows)}
    n_req = len(request_rows)

    columns = []
    costs = []
    empty_costs = {vid: catalog.per_vehicle[vid].get(0, 0.0) for vid in vehicle_rows}
    for vid, tid, cost in catalog.pairs():
        if any(r not in row_of for r in catalog.trips[tid]):
            continue
        columns.append((tid, vid))
        costs.append(cost - empty_costs[vid] if form == LPForm.COVERING else cost)

    A = np.zeros((n_req + len(vehicle_rows), len(columns)))
    vehicle_row = {vid: n_req + i for i, vid in enumerate(vehicle_rows)}
    for j, (tid, vid) in enumerate(columns):
        A[vehicle_row[vid], j] = 1.0
        for r in catalog.trips[tid]:
            A[row_of[r], j] = 1.0

    offset = math.fsum(empty_costs.values()) if form == LPForm.COVERING else 0.0
    logger.debug(
        f"Built {form.value} LP with {A.shape[0]} rows and {A.shape[1]} columns"
    )
    return StandardFormLP(
        A=A,
        c=np.asarray(costs, dtype=float),
        columns=tuple(columns),
        request_rows=request_rows,
        vehicle_rows=vehicle_rows,
        catalog=catalog,
        form=form,
        offset=offset,
        empty_costs=empty_costs,
    )


class RevisedSimplex:
    """
    Two-phase revised simplex for min c.x s.t. A x = b, x >= 0, b >= 0.

    Keeps an explicit basis inverse updated in product form and rebuilt
    every REFACTOR_INTERVAL pivots. Dantzig pricing switches to Bland's rule
    once 5 * (rows + cols) consecutive degenerate pivots occur in a phase.
    """

    def __init__(
        self, A: np.ndarray, b: np.ndarray, c: np.ndarray, debug: bool = False
    ):
        self.m, self.n = A.shape
        self.A = np.hstack([A, np.eye(self.m)])
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.debug = debug
        self.basis = list(range(self.n, self.n + self.m))
        self.Binv = np.eye(self.m)
        self.xB = self.b.copy()
        self.iterations = 0
        self.trace: List[Tuple[float, float]] = []
        self.max_iterations = 100 * (self.m + self.n) + 1000

    def _refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as e:
            raise NumericalFailure(f"singular basis: {e}") from e
        self.xB = self.Binv @ self.b
        self.xB[(self.xB < 0) & (self.xB > -FEASIBILITY_TOLERANCE)] = 0.0

    def _duals(self, costs: np.ndarray) -> np.ndarray:
        return costs[self.basis] @ self.Binv

    def _pivot(self, r: int, q: int, u: np.ndarray) -> None:
        pivot = u[r]
        if abs(pivot) < PIVOT_TOLERANCE:
            raise NumericalFailure(f"pivot magnitude {abs(pivot):.3e} too small")
        theta = self.xB[r] / pivot
        self.xB -= theta * u
        self.xB[r] = theta
        self.xB[(self.xB < 0) & (self.xB > -FEASIBILITY_TOLERANCE)] = 0.0
        row = self.Binv[r] / pivot
        self.Binv -= np.outer(u, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.iterations += 1
        if self.iterations % REFACTOR_INTERVAL == 0:
            self._refactor()

    def _run_phase(self, costs: np.ndarray, allowed: np.ndarray) -> np.ndarray:
        """Pivot to optimality for the given costs; returns the final duals."""
        degenerate = 0
        bland = False
        limit = 5 * (self.m + self.n)
        while True:
            if self.iterations > self.max_iterations:
                raise NumericalFailure(
                    f"simplex did not converge in {self.max_iterations} pivots"
                )
            pi = self._duals(costs)
            if self.debug:
                primal = float(costs[self.basis] @ self.xB)
                dual = float(pi @ self.b)
                self.trace.append((primal, dual))
            d = costs - pi @ self.A
            in_basis = np.zeros(self.A.shape[1], dtype=bool)
            in_basis[self.basis] = True
            eligible = np.flatnonzero(allowed & ~in_basis & (d < -OPTIMALITY_TOLERANCE))
            if eligible.size == 0:
                return pi
            if bland:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmin(d[eligible])])

            u = self.Binv @ self.A[:, q]
            rows = np.flatnonzero(u > FEASIBILITY_TOLERANCE)
            if rows.size == 0:
                raise NumericalFailure(f"unbounded direction on column {q}")
            ratios = self.xB[rows] / u[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12]
            r = int(min(ties, key=lambda i: self.basis[i]))

            if best <= FEASIBILITY_TOLERANCE:
                degenerate += 1
                if not bland and degenerate >= limit:
                    bland = True
                    logger.debug(
                        f"Switching to Bland's rule after {degenerate} "
                        "degenerate pivots"
                    )
            else:
                degenerate = 0
            self._pivot(r, q, u)

    def solve(self) -> Tuple[str, Optional[np.ndarray], np.ndarray]:
        """
        Run both phases.

        Returns:
            ("optimal", x, duals) or ("infeasible", None, phase-1 duals)
        """
        if self.m == 0:
            return "optimal", np.zeros(self.n), np.zeros(0)

        total = self.n + self.m
        phase1_costs = np.concatenate([np.zeros(self.n), np.ones(self.m)])
        pi1 = self._run_phase(phase1_costs, np.ones(total, dtype=bool))
        infeasibility = float(
            sum(self.xB[i] for i, j in enumerate(self.basis) if j >= self.n)
        )
        if infeasibility > PHASE1_TOLERANCE:
            logger.debug(f"Phase 1 ended with infeasibility {infeasibility:.3e}")
            return "infeasible", None, pi1

        # Drive zero-valued artificials out of the basis where possible.
        for r in range(self.m):
            if self.basis[r] < self.n:
                continue
            row = self.Binv[r] @ self.A[:, : self.n]
            row[[j for j in self.basis if j < self.n]] = 0.0
            candidates = np.flatnonzero(np.abs(row) > FEASIBILITY_TOLERANCE)
            if candidates.size:
                q = int(candidates[np.argmax(np.abs(row[candidates]))])
                self._pivot(r, q, self.Binv @ self.A[:, q])

        phase2_costs = np.concatenate([self.c, np.zeros(self.m)])
        allowed = np.concatenate(
            [np.ones(self.n, dtype=bool), np.zeros(self.m, dtype=bool)]
        )
        pi = self._run_phase(phase2_costs, allowed)

        x = np.zeros(self.n)
        for i, j in enumerate(self.basis):
            if j < self.n:
                x[j] = max(self.xB[i], 0.0)
        return "optimal", x, pi


def _expanded(lp: StandardFormLP) -> Tuple[np.ndarray, np.ndarray]:
    # Covering form: surplus on request rows, slack on vehicle rows.
    if lp.form == LPForm.EQUALITY:
        return lp.A, lp.c
    n_req = len(lp.request_rows)
    signs = np.concatenate([-np.ones(n_req), np.ones(len(lp.vehicle_rows))])
    A = np.hstack([lp.A, np.diag(signs)])
    c = np.concatenate([lp.c, np.zeros(lp.n_rows)])
    return A, c


def _dual_from_pi(lp: StandardFormLP, pi: np.ndarray, shift: bool) -> DualSolution:
    # Covering form: the packing multiplier -pi_v is >= 0 against empty-trip-relative
    # costs. Shifting by c_0v re-prices against full costs, so z_v >= -c_0v (the
    # empty-trip dual constraint) and z_v >= 0 only when the empty trip is free.
    n_req = len(lp.request_rows)
    y = {r: float(pi[i]) for i, r in enumerate(lp.request_rows)}
    z = {}
    for i, vid in enumerate(lp.vehicle_rows):
        value = -float(pi[n_req + i])
        if shift:
            value -= lp.empty_costs.get(vid, 0.0)
        z[vid] = value
    return DualSolution.from_multipliers(y, z)


def solve_lp(lp: StandardFormLP, debug: bool = False) -> LPResult:
    """
    Solve the LP relaxation exactly.

    Args:
        lp: Problem built by build_lp (or restricted from one)
        debug: Record (primal, dual) objective pairs at every iteration

    Returns:
        LPResult; status "optimal" with primal x and dual (y, z), or
        "infeasible" with Farkas multipliers

    Raises:
        NumericalFailure: On a forced pivot below PIVOT_TOLERANCE or non-convergence
    """
    A, c = _expanded(lp)
    simplex = RevisedSimplex(A, np.ones(lp.n_rows), c, debug=debug)
    status, x_full, pi = simplex.solve()
    trace = tuple(simplex.trace)

    if status == "infeasible":
        logger.info(f"LP infeasible after {simplex.iterations} pivots")
        return LPResult(
            status="infeasible",
            primal=None,
            dual=None,
            x=None,
            objective=math.inf,
            iterations=simplex.iterations,
            farkas=_dual_from_pi(lp, pi, shift=False),
            trace=trace,
        )

    x = x_full[: lp.n_cols]
    values: Dict[Tuple[int, int], float] = {}
    for j, (tid, vid) in enumerate(lp.columns):
        if x[j] > ZERO_TOLERANCE:
            values[(tid, vid)] = min(float(x[j]), 1.0)
    if lp.form == LPForm.COVERING:
        # Unused vehicle capacity is the empty trip.
        for vid in lp.vehicle_rows:
            used = math.fsum(v for (t, w), v in values.items() if w == vid and t != 0)
            if lp.catalog.admissible(0, vid) and used < 1.0 - ZERO_TOLERANCE:
                values[(0, vid)] = 1.0 - used
            else:
                values.pop((0, vid), None)

    objective = math.fsum(
        lp.catalog.cost(tid, vid) * value for (tid, vid), value in values.items()
    )
    if lp.form == LPForm.EQUALITY:
        objective = float(lp.c @ x) + lp.offset
    dual = _dual_from_pi(lp, pi, shift=lp.form == LPForm.COVERING)
    logger.debug(
        f"LP optimal: objective {objective:.9g} after {simplex.iterations} pivots"
    )
    return LPResult(
        status="optimal",
        primal=FractionalSolution(values=values, objective=objective),
        dual=dual,
        x=x,
        objective=objective,
        iterations=simplex.iterations,
        trace=trace,
    )


def support_histogram(x: FractionalSolution, bins: int = 10) -> SupportHistogram:
    """
    Histogram of the supported values of a fractional solution.

    Args:
        x: Fractional solution
        bins: Number of equal-width bins over (0, 1], at least 2

    Returns:
        SupportHistogram with the integral fraction among supported values
        and the half-integral fraction among non-integral supported values
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    values = np.array([v for v in x.values.values() if v > SUPPORT_THRESHOLD])
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    integral = np.abs(values - 1.0) <= INTEGRAL_TOLERANCE
    non_integral = values[~integral]
    non_counts, _ = np.histogram(non_integral, bins=edges)
    half = np.abs(non_integral - 0.5) <= INTEGRAL_TOLERANCE
    return SupportHistogram(
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        non_integral_counts=tuple(int(c) for c in non_counts),
        n_supported=int(values.size),
        integral_fraction=float(integral.mean()) if values.size else 1.0,
        half_integral_fraction=float(half.mean()) if non_integral.size else 0.0,
    )


def _terms(names: Sequence[str], coefficients: Sequence[float]) -> List[str]:
    terms = []
    for name, coef in zip(names, coefficients):
        sign = "-" if coef < 0 else "+"
        terms.append(f"{sign} {abs(coef):.12g} {name}")
    if terms and terms[0].startswith("+ "):
        terms[0] = terms[0][2:]
    return terms


def _wrap(prefix: str, terms: List[str], suffix: str = "") -> List[str]:
    lines = []
    for k in range(0, max(len(terms), 1), 8):
        chunk = " ".join(terms[k : k + 8]) or "0"
        lines.append((prefix if k == 0 else "   ") + chunk)
    lines[-1] += suffix
    return lines


def write_lp_file(lp: StandardFormLP, path: Union[str, Path]) -> None:
    """
    Dump the LP in CPLEX-LP text format: objective, constraints, bounds.

    Variables are named x_t<trip>_v<vehicle>; rows r_<request> and v_<vehicle>.
    """
    names = [f"x_t{tid}_v{vid}" for tid, vid in lp.columns]
    lines = [f"\\ RTV assignment LP ({lp.form.value} form), offset {lp.offset:.12g}"]
    lines.append("Minimize")
    lines.extend(_wrap(" obj: ", _terms(names, lp.c)))
    lines.append("Subject To")
    n_req = len(lp.request_rows)
    for i in range(lp.n_rows):
        cols = np.flatnonzero(lp.A[i])
        if i < n_req:
            label = f"r_{lp.request_rows[i]}"
            sense = "=" if lp.form == LPForm.EQUALITY else ">="
        else:
            label = f"v_{lp.vehicle_rows[i - n_req]}"
            sense = "=" if lp.form == LPForm.EQUALITY else "<="
        terms = _terms([names[j] for j in cols], [1.0] * len(cols))
        lines.extend(_wrap(f" {label}: ", terms, f" {sense} 1"))
    lines.append("Bounds")
    lines.extend(f" 0 <= {name} <= 1" for name in names)
    lines.append("End")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote LP dump '{path}' with {lp.n_rows} rows and {lp.n_cols} columns")
