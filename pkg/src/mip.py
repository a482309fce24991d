"""
Exact ILP solver for the RTV assignment problem.

solve_ilp runs LP-based branch-and-bound over the equality-form LP;
brute_force_opt enumerates every vehicle-to-trip combination and serves as
an independent oracle on small instances.
"""

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from lp import LPForm, StandardFormLP, solve_lp
from model import Assignment, Instance, TripCatalog, build_assignment
from utils import Stopwatch, get_logger

logger = get_logger(__name__)

INTEGRALITY_TOLERANCE = 1e-6
PRUNE_TOLERANCE = 1e-9
MAX_ENUMERATION = 10**7


class SearchSpaceOverflow(ValueError):
    """The brute-force search space exceeds MAX_ENUMERATION combinations."""

    pass


@dataclass(frozen=True)
class MipResult:
    """
    Branch-and-bound outcome.

    status is "optimal", "infeasible" or "time_limit". On a time limit the
    incumbent (if any) is returned with bound <= objective and the relative gap.
    """

    status: str
    assignment: Optional[Assignment]
    objective: float
    root_bound: float
    bound: float
    gap: float
    nodes: int

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    fixed_zero: FrozenSet[int] = field(compare=False)
    fixed_one: FrozenSet[int] = field(compare=False)


def assignment_from_columns(lp: StandardFormLP, x: np.ndarray) -> Assignment:
    """
    Read an integral column vector back as an Assignment.

    Args:
        lp: The LP x is aligned with
        x: Column values; entries above 1/2 are taken as chosen

    Returns:
        Assignment (vehicles without a chosen column take the empty trip)
    """
    choices = {}
    for j in np.flatnonzero(x > 0.5):
        tid, vid = lp.columns[j]
        choices[vid] = tid
    return build_assignment(choices, lp.catalog)


def _branching_column(x: np.ndarray) -> Optional[int]:
    # Most fractional column, lowest index on ties; None if integral.
    distance = np.minimum(x, 1.0 - x)
    fractional = np.flatnonzero(distance > INTEGRALITY_TOLERANCE)
    if fractional.size == 0:
        return None
    closeness = np.abs(x[fractional] - 0.5)
    return int(fractional[np.argmin(closeness)])


def solve_ilp(lp: StandardFormLP, time_limit: Optional[float] = None) -> MipResult:
    """
    Solve the assignment ILP to proven optimality.

    Dives depth-first (fix-to-1 child first) until the first incumbent is
    found, then selects nodes by best bound. Node LPs are the restricted
    problems solved by solve_lp.

    Args:
        lp: Equality-form LP from build_lp
        time_limit: Seconds before returning the incumbent with its gap

    Returns:
        MipResult

    Raises:
        ValueError: If lp is not in equality form
        NumericalFailure: Propagated from a node LP
    """
    if lp.form != LPForm.EQUALITY:
        raise ValueError("solve_ilp requires an equality-form LP")

    watch = Stopwatch()
    logger.info(f"Starting branch-and-bound on {lp.n_rows}x{lp.n_cols} LP")
    root = solve_lp(lp)
    if not root.optimal:
        logger.info("Root LP infeasible")
        return MipResult("infeasible", None, math.inf, math.inf, math.inf, math.inf, 1)

    root_bound = root.objective
    incumbent = math.inf
    incumbent_x: Optional[np.ndarray] = None
    seq = 0
    stack: List[_Node] = [_Node(root_bound, seq, frozenset(), frozenset())]
    heap: List[_Node] = []
    nodes = 0
    timed_out = False

    while stack or heap:
        if watch.expired(time_limit):
            timed_out = True
            break
        node = stack.pop() if stack else heapq.heappop(heap)
        if node.bound >= incumbent - PRUNE_TOLERANCE:
            continue

        nodes += 1
        if nodes == 1:
            result, keep = root, list(range(lp.n_cols))
        else:
            sub, keep = lp.restrict(node.fixed_zero, node.fixed_one)
            if sub is None:
                continue
            result = solve_lp(sub)
        if not result.optimal or result.objective >= incumbent - PRUNE_TOLERANCE:
            continue

        x = np.zeros(lp.n_cols)
        x[keep] = result.x
        x[list(node.fixed_one)] = 1.0
        j = _branching_column(x)
        if j is None:
            incumbent = result.objective
            incumbent_x = np.round(x)
            logger.debug(f"New incumbent {incumbent:.9g} at node {nodes}")
            if stack:
                for pending in stack:
                    heapq.heappush(heap, pending)
                stack = []
            continue

        zero = _Node(result.objective, seq + 1, node.fixed_zero | {j}, node.fixed_one)
        one = _Node(result.objective, seq + 2, node.fixed_zero, node.fixed_one | {j})
        seq += 2
        if incumbent_x is None:
            stack.extend([zero, one])
        else:
            heapq.heappush(heap, zero)
            heapq.heappush(heap, one)

    if incumbent_x is None:
        status = "time_limit" if timed_out else "infeasible"
        logger.info(f"Branch-and-bound finished: {status} after {nodes} nodes")
        return MipResult(
            status, None, math.inf, root_bound, root_bound, math.inf, nodes
        )

    if timed_out:
        open_bounds = [n.bound for n in stack + heap]
        bound = min([incumbent] + open_bounds)
        gap = (incumbent - bound) / max(abs(incumbent), 1e-12)
        status = "time_limit"
        logger.warning(
            f"Time limit {time_limit}s reached after {nodes} nodes, gap {gap:.3%}"
        )
    else:
        bound, gap, status = incumbent, 0.0, "optimal"

    assignment = assignment_from_columns(lp, incumbent_x)
    logger.info(
        f"Branch-and-bound {status}: objective {assignment.cost:.9g}, "
        f"root bound {root_bound:.9g}, {nodes} nodes, {watch.elapsed:.3f}s"
    )
    return MipResult(status, assignment, assignment.cost, root_bound, bound, gap, nodes)


def brute_force_opt(
    catalog: TripCatalog,
    instance: Optional[Instance] = None,
    penalty: bool = False,
) -> Optional[Assignment]:
    """
    Optimal assignment by full enumeration of vehicle-to-trip combinations.

    Vehicles are enumerated in id order and their trips in id order, so the
    first minimum found is the lexicographically smallest trip-id vector.

    Args:
        catalog: Trip catalog
        instance: Supplies request penalties in penalty mode
        penalty: Allow uncovered requests at their penalty each; the returned
            cost then includes the penalties paid

    Returns:
        Optimal Assignment, or None if no combination covers every request

    Raises:
        SearchSpaceOverflow: If prod_v |T(v)| exceeds MAX_ENUMERATION
        ValueError: If penalty is set without an instance
    """
    if penalty and instance is None:
        raise ValueError("penalty mode needs the instance for request penalties")

    vehicles = catalog.vehicle_ids
    options: List[Sequence[Tuple[int, float]]] = [
        list(catalog.per_vehicle[vid].items()) for vid in vehicles
    ]
    size = math.prod(len(o) for o in options)
    if size > MAX_ENUMERATION:
        raise SearchSpaceOverflow(
            f"{size} combinations exceed the brute-force limit of {MAX_ENUMERATION}"
        )

    requests = set(catalog.request_ids)
    penalties: Dict[int, float] = (
        {r: instance.request(r).penalty for r in requests} if penalty else {}
    )
    can_prune = all(c >= 0 for o in options for _, c in o)
    best_cost = math.inf
    best: Optional[List[int]] = None
    chosen: List[int] = []

    def search(i: int, covered: FrozenSet[int], cost: float) -> None:
        nonlocal best_cost, best
        if can_prune and cost > best_cost + 1e-12:
            return
        if i == len(vehicles):
            missing = requests - covered
            if missing and not penalty:
                return
            total = cost + math.fsum(penalties[r] for r in sorted(missing))
            if total < best_cost - 1e-12:
                best_cost = total
                best = list(chosen)
            return
        for tid, c in options[i]:
            trip = catalog.trips[tid]
            if any(r in covered for r in trip):
                continue
            chosen.append(tid)
            search(i + 1, covered | frozenset(trip.requests), cost + c)
            chosen.pop()

    search(0, frozenset(), 0.0)
    if best is None:
        logger.debug("Brute force found no covering combination")
        return None
    assignment = build_assignment(dict(zip(vehicles, best)), catalog)
    if penalty:
        paid = math.fsum(penalties[r] for r in sorted(assignment.unassigned))
        assignment = replace(assignment, cost=assignment.cost + paid)
    return assignment
