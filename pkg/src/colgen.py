"""
Column generation for the LP relaxation.

The restricted master is the covering-form LP over the columns generated
so far. Its dual (y, z) is separated per vehicle by price_vehicle, which
maximizes the net worth sum_{r in t} y_r - c_tv over the vehicle's
feasible trips. An infeasible master is repaired by Farkas pricing on the
phase-1 multipliers.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from lp import LPForm, NumericalFailure, build_lp, solve_lp
from model import (
    EMPTY_TRIP,
    CatalogBuilder,
    DualSolution,
    FractionalSolution,
    Instance,
    Trip,
    TripCatalog,
    Vehicle,
)
from tripgen import feasible_trips_for_vehicle
from utils import Stopwatch, get_logger, round_float

logger = get_logger(__name__)

SEPARATION_TOLERANCE = 1e-7

LOG_COLUMNS = ("iteration", "master_objective", "columns_added", "max_violation")


class IterationLimitExceeded(NumericalFailure):
    """Column generation did not converge within its iteration cap."""

    pass


@dataclass(frozen=True)
class PricingResult:
    trip: Trip
    value: float
    cost: float


@dataclass(frozen=True)
class Violation:
    """A dual constraint sum_{r in t} y_r - z_v <= c_tv violated by amount."""

    trip: Trip
    vehicle_id: int
    value: float
    amount: float


@dataclass(frozen=True)
class ColgenResult:
    status: str
    primal: Optional[FractionalSolution]
    dual: Optional[DualSolution]
    objective: float
    iterations: int
    catalog: Optional[TripCatalog]
    log: Tuple[Tuple[int, float, int, float], ...] = field(default_factory=tuple)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class TripPool:
    """Per-vehicle feasible trips with costs, enumerated once on first use."""

    def __init__(self, instance: Instance, max_trip_size: Optional[int] = None):
        self.instance = instance
        self.max_trip_size = max_trip_size
        self._trips: Dict[int, Dict[Trip, float]] = {}

    def trips(self, vehicle: Vehicle) -> Dict[Trip, float]:
        if vehicle.id not in self._trips:
            self._trips[vehicle.id] = vehicle_trips(
                vehicle, self.instance, self.max_trip_size
            )
        return self._trips[vehicle.id]


def vehicle_trips(
    vehicle: Vehicle, instance: Instance, max_trip_size: Optional[int] = None
) -> Dict[Trip, float]:
    """
    Candidate trips of one vehicle: the explicit catalog when the instance
    carries one, otherwise level-wise routing enumeration.
    """
    if instance.trips is not None:
        catalog = instance.trips
        return {
            catalog.trips[tid]: cost
            for tid, cost in catalog.per_vehicle.get(vehicle.id, {}).items()
            if max_trip_size is None or len(catalog.trips[tid]) <= max_trip_size
        }
    return feasible_trips_for_vehicle(vehicle, instance, max_trip_size)


def price_vehicle(
    vehicle: Vehicle,
    y: Mapping[int, float],
    instance: Instance,
    max_trip_size: Optional[int] = None,
    farkas: bool = False,
    trips: Optional[Mapping[Trip, float]] = None,
) -> PricingResult:
    """
    Exact pricing: maximize sum_{r in t} y_r - c_tv over the vehicle's trips.

    Args:
        vehicle: Vehicle to price
        y: Request duals
        instance: Instance supplying routing data
        max_trip_size: Trip size bound (default: vehicle capacity)
        farkas: Ignore trip costs (pricing on phase-1 multipliers)
        trips: Pre-enumerated trip -> cost map for the vehicle

    Returns:
        Best trip and its value; ties go to the smaller (size, requests) key
    """
    if trips is None:
        trips = vehicle_trips(vehicle, instance, max_trip_size)
    best: Optional[PricingResult] = None
    for trip in sorted(trips, key=lambda t: (len(t), t.requests)):
        cost = trips[trip]
        value = math.fsum(y.get(r, 0.0) for r in trip) - (0.0 if farkas else cost)
        if best is None or value > best.value + 1e-12:
            best = PricingResult(trip=trip, value=value, cost=cost)
    if best is None:
        return PricingResult(trip=EMPTY_TRIP, value=-math.inf, cost=math.inf)
    return best


def separate_dual(
    dual: DualSolution,
    instance: Instance,
    max_trip_size: Optional[int] = None,
    pool: Optional[TripPool] = None,
) -> Optional[Violation]:
    """
    Check (y, z) against every vehicle's dual polytope.

    Args:
        dual: Candidate dual solution
        instance: Instance whose vehicles are separated
        max_trip_size: Trip size bound
        pool: Shared trip enumeration cache

    Returns:
        The violated constraint of the lowest vehicle id, or None when (y, z)
        is certified feasible
    """
    pool = pool or TripPool(instance, max_trip_size)
    for vehicle in sorted(instance.vehicles, key=lambda v: v.id):
        result = price_vehicle(
            vehicle, dual.y, instance, max_trip_size, trips=pool.trips(vehicle)
        )
        z = dual.z.get(vehicle.id, 0.0)
        if result.value > z + SEPARATION_TOLERANCE:
            return Violation(result.trip, vehicle.id, result.value, result.value - z)
    return None


def _downward_closure(
    columns: Mapping[int, Iterable[Trip]], pool: TripPool, instance: Instance
) -> TripCatalog:
    builder = CatalogBuilder(instance.request_ids)
    for vid in sorted(columns):
        vehicle = instance.vehicle(vid)
        available = pool.trips(vehicle)
        closure = set()
        for trip in columns[vid]:
            stack = [trip]
            while stack:
                current = stack.pop()
                if current in closure or current not in available:
                    continue
                closure.add(current)
                stack.extend(current.without(r) for r in current)
        for trip in sorted(closure, key=lambda t: (len(t), t.requests)):
            builder.set_cost(trip, vid, available[trip])
    return builder.build()


def write_iteration_log(
    rows: Iterable[Tuple[int, float, int, float]], path: Union[str, Path]
) -> None:
    """Write the iteration log as CSV with LOG_COLUMNS as header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for iteration, objective, added, violation in rows:
            writer.writerow(
                [iteration, round_float(objective), added, round_float(violation)]
            )


def solve_lp_by_colgen(
    instance: Instance,
    max_trip_size: Optional[int] = None,
    initial_columns: Iterable[Tuple[Trip, int]] = (),
    log_path: Optional[Union[str, Path]] = None,
    jobs: int = 1,
) -> ColgenResult:
    """
    Solve the LP relaxation by column generation.

    The master starts from every vehicle's empty trip (dummy vehicles also
    bring their singleton) plus initial_columns, and receives at most one
    column per vehicle per iteration: the best-priced one, when it violates
    its dual constraint. On convergence the LP over the per-vehicle downward
    closure of the generated columns is re-solved in equality form so the
    returned primal is a valid FractionalSolution.

    Args:
        instance: Instance to solve
        max_trip_size: Trip size bound for pricing
        initial_columns: Extra (trip, vehicle id) columns
        log_path: Optional CSV iteration log
        jobs: Worker threads for per-vehicle pricing

    Returns:
        ColgenResult; iterations counts the master solves that added
        columns, status "infeasible" when Farkas pricing finds no column

    Raises:
        IterationLimitExceeded: After max(10 |R| |V|, 1) iterations
    """
    watch = Stopwatch()
    pool = TripPool(instance, max_trip_size)
    vehicles = sorted(instance.vehicles, key=lambda v: v.id)
    columns: Dict[int, set] = {v.id: set() for v in vehicles}
    for vehicle in vehicles:
        available = pool.trips(vehicle)
        if EMPTY_TRIP in available:
            columns[vehicle.id].add(EMPTY_TRIP)
        if vehicle.is_dummy:
            columns[vehicle.id].update(t for t in available if not t.is_empty)
    for trip, vid in initial_columns:
        if trip in pool.trips(instance.vehicle(vid)):
            columns[vid].add(trip)

    cap = max(10 * len(instance.requests) * len(vehicles), 1)
    log: List[Tuple[int, float, int, float]] = []
    logger.info(
        f"Starting column generation over {len(instance.requests)} requests "
        f"and {len(vehicles)} vehicles"
    )

    iteration = 0
    while True:
        iteration += 1
        if iteration > cap:
            raise IterationLimitExceeded(
                f"column generation exceeded {cap} iterations"
            )
        builder = CatalogBuilder(instance.request_ids)
        for vid in sorted(columns):
            builder.add_vehicle(vid)
            available = pool.trips(instance.vehicle(vid))
            for trip in sorted(columns[vid], key=lambda t: (len(t), t.requests)):
                builder.set_cost(trip, vid, available[trip])
        master = solve_lp(build_lp(builder.build(), instance, LPForm.COVERING))
        farkas = not master.optimal
        dual = master.farkas if farkas else master.dual

        def price(vehicle: Vehicle) -> PricingResult:
            return price_vehicle(
                vehicle,
                dual.y,
                instance,
                max_trip_size,
                farkas=farkas,
                trips=pool.trips(vehicle),
            )

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as executor:
                priced = list(executor.map(price, vehicles))
        else:
            priced = [price(v) for v in vehicles]

        added = 0
        max_violation = 0.0
        for vehicle, result in zip(vehicles, priced):
            amount = result.value - dual.z.get(vehicle.id, 0.0)
            if amount > SEPARATION_TOLERANCE and result.trip not in columns[vehicle.id]:
                columns[vehicle.id].add(result.trip)
                added += 1
                max_violation = max(max_violation, amount)

        objective = master.objective if master.optimal else math.inf
        log.append((iteration, objective, added, max_violation))
        logger.debug(
            f"Iteration {iteration}: master {'infeasible' if farkas else objective}, "
            f"{added} columns added, max violation {max_violation:.3e}"
        )
        if added == 0:
            break

    if log_path is not None:
        write_iteration_log(log, log_path)

    if farkas:
        logger.info(
            f"Column generation proved infeasibility after {iteration} iterations"
        )
        return ColgenResult(
            "infeasible", None, None, math.inf, iteration - 1, None, tuple(log)
        )

    catalog = _downward_closure(columns, pool, instance)
    final = solve_lp(build_lp(catalog, instance, LPForm.EQUALITY))
    logger.info(
        f"Column generation converged after {iteration} iterations: objective "
        f"{final.objective:.9g}, {sum(len(c) for c in columns.values())} columns, "
        f"{watch.elapsed:.3f}s"
    )
    return ColgenResult(
        status="optimal",
        primal=final.primal,
        dual=master.dual,
        objective=final.objective,
        iterations=iteration - 1,
        catalog=catalog,
        log=tuple(log),
    )
