"""
Feasible trip catalog generation.

Trips are built level by level in increasing size. A size-s trip is a
candidate for vehicle v only if every size-(s-1) sub-trip is already
feasible for v, so each T(v) is downward closed by construction.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from model import (
    EMPTY_TRIP,
    CatalogBuilder,
    Instance,
    Trip,
    TripCatalog,
    Vehicle,
)
from routing import (
    CostOracle,
    RouteResult,
    StopCountOverflow,
    exact_cost,
    heuristic_cost,
)
from utils import Stopwatch, get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class CatalogStats:
    counts_by_size: Dict[int, int]
    n_trips: int
    n_pairs: int


@dataclass(frozen=True)
class RecostResult:
    """A catalog re-priced by another oracle and the observed ratio to the original."""

    catalog: TripCatalog
    alpha_hat: float
    failures: Tuple[Tuple[int, int], ...] = field(default_factory=tuple)


def _size_limit(vehicle: Vehicle, max_trip_size: Optional[int]) -> int:
    return vehicle.capacity if max_trip_size is None else max_trip_size


def _route(
    oracle: CostOracle, trip: Trip, vehicle: Vehicle, instance: Instance
) -> Optional[RouteResult]:
    try:
        return oracle(trip, vehicle, instance)
    except StopCountOverflow:
        logger.debug(
            f"Skipping trip {list(trip)} on vehicle {vehicle.id}: too many stops"
        )
        return None


def _empty_trip_cost(
    vehicle: Vehicle, instance: Instance, oracle: CostOracle
) -> Tuple[float, bool]:
    # Cost of delivering onboard passengers; falls back to the shortest
    # route ignoring deadlines when they can no longer all be met.
    if vehicle.is_dummy:
        return 0.0, True
    result = _route(oracle, EMPTY_TRIP, vehicle, instance)
    if result is not None and result.feasible:
        return result.length, True
    logger.warning(
        f"Vehicle {vehicle.id} cannot meet its onboard deadlines; "
        "costing its empty trip without deadlines"
    )
    relaxed = exact_cost(EMPTY_TRIP, vehicle, instance, enforce_deadlines=False)
    return relaxed.length, False


def _next_candidates(
    previous: Set[Trip], singles: Sequence[int], size: int
) -> List[Trip]:
    """Size-`size` trips whose every size-(size-1) sub-trip is in previous."""
    candidates = set()
    for trip in previous:
        top = trip.requests[-1] if trip.requests else -1
        for r in singles:
            if r <= top:
                continue
            candidate = Trip(trip.requests + (r,))
            if len(candidate) != size:
                continue
            if all(candidate.without(q) in previous for q in candidate):
                candidates.add(candidate)
    return sorted(candidates)


def _evaluate(
    pairs: List[Tuple[Trip, Vehicle]],
    instance: Instance,
    oracle: CostOracle,
    jobs: int,
    watch: Stopwatch,
    timeout: Optional[float],
) -> Optional[List[Optional[RouteResult]]]:
    # Returns None when the timeout expires before the level is complete.
    if jobs > 1 and timeout is None:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(
                executor.map(lambda tv: _route(oracle, tv[0], tv[1], instance), pairs)
            )
    results = []
    for trip, vehicle in pairs:
        if watch.expired(timeout):
            return None
        results.append(_route(oracle, trip, vehicle, instance))
    return results


def generate_catalog(
    instance: Instance,
    max_trip_size: Optional[int] = None,
    timeout: Optional[float] = None,
    oracle: CostOracle = exact_cost,
    jobs: int = 1,
) -> TripCatalog:
    """
    Enumerate the downward-closed feasible trip catalog.

    Args:
        instance: Instance to enumerate (an explicit instance.trips is returned as is)
        max_trip_size: Trip size bound; defaults to each vehicle's capacity
        timeout: Seconds after which generation stops at the current level
        oracle: Routing cost oracle confirming and costing each (trip, vehicle)
        jobs: Worker threads for evaluating the candidates of one level

    Returns:
        TripCatalog; truncated_at holds the level cut short by the timeout
    """
    if instance.trips is not None:
        logger.info("Using the instance's explicit trip catalog")
        return instance.trips

    watch = Stopwatch()
    builder = CatalogBuilder(instance.request_ids)
    vehicles = sorted(instance.vehicles, key=lambda v: v.id)
    real = [v for v in vehicles if not v.is_dummy]

    for vehicle in vehicles:
        cost, _ = _empty_trip_cost(vehicle, instance, oracle)
        builder.set_cost(EMPTY_TRIP, vehicle.id, cost)

    previous: Dict[int, Set[Trip]] = {v.id: {EMPTY_TRIP} for v in real}
    singles: Dict[int, List[int]] = {v.id: list(instance.request_ids) for v in real}
    truncated_at = None
    top = max((_size_limit(v, max_trip_size) for v in real), default=0)

    for size in range(1, top + 1):
        pairs = []
        for vehicle in real:
            if size > _size_limit(vehicle, max_trip_size):
                continue
            if size == 1:
                candidates = [Trip.of(r) for r in singles[vehicle.id]]
            else:
                candidates = _next_candidates(
                    previous[vehicle.id], singles[vehicle.id], size
                )
            pairs.extend((trip, vehicle) for trip in candidates)
        if not pairs:
            break

        results = _evaluate(pairs, instance, oracle, jobs, watch, timeout)
        if results is None:
            truncated_at = size
            logger.warning(
                f"Trip generation timed out after {watch.elapsed:.2f}s at level {size}"
            )
            break

        feasible: Dict[int, Dict[Trip, float]] = {v.id: {} for v in real}
        for (trip, vehicle), result in zip(pairs, results):
            if result is not None and result.feasible:
                feasible[vehicle.id][trip] = result.length

        new_trips = sorted({t for found in feasible.values() for t in found})
        for trip in new_trips:
            builder.add_trip(trip)
        for vehicle in real:
            for trip, cost in feasible[vehicle.id].items():
                builder.set_cost(trip, vehicle.id, cost)
            previous[vehicle.id] = set(feasible[vehicle.id])
            if size == 1:
                singles[vehicle.id] = sorted(
                    t.requests[0] for t in feasible[vehicle.id]
                )

        logger.debug(
            f"Level {size}: {len(pairs)} candidates, {len(new_trips)} trips, "
            f"{sum(len(f) for f in feasible.values())} feasible pairs"
        )
        if not new_trips:
            break

    for vehicle in vehicles:
        if vehicle.is_dummy:
            request = instance.request(vehicle.dummy_for)
            builder.set_cost(Trip.of(request.id), vehicle.id, request.penalty)

    catalog = builder.build(truncated_at=truncated_at)
    logger.info(
        f"Generated {len(catalog.trips)} trips over {len(vehicles)} vehicles "
        f"in {watch.elapsed:.3f}s"
    )
    return catalog


def feasible_trips_for_vehicle(
    vehicle: Vehicle,
    instance: Instance,
    max_trip_size: Optional[int] = None,
    oracle: CostOracle = exact_cost,
    request_ids: Optional[Iterable[int]] = None,
) -> Dict[Trip, float]:
    """
    Every feasible trip of one vehicle with its cost, by level-wise enumeration.

    A superset is only tried once all its sub-trips are feasible.

    Args:
        vehicle: Vehicle to enumerate for
        instance: Instance supplying requests and metric
        max_trip_size: Trip size bound; defaults to the vehicle capacity
        oracle: Routing cost oracle
        request_ids: Restrict to these requests (default: all)

    Returns:
        trip -> cost, the empty trip included
    """
    if vehicle.is_dummy:
        request = instance.request(vehicle.dummy_for)
        return {EMPTY_TRIP: 0.0, Trip.of(request.id): request.penalty}

    empty_cost, _ = _empty_trip_cost(vehicle, instance, oracle)
    found: Dict[Trip, float] = {EMPTY_TRIP: empty_cost}
    previous: Set[Trip] = {EMPTY_TRIP}
    singles = sorted(instance.request_ids if request_ids is None else request_ids)
    for size in range(1, _size_limit(vehicle, max_trip_size) + 1):
        if size == 1:
            candidates = [Trip.of(r) for r in singles]
        else:
            candidates = _next_candidates(previous, singles, size)
        level = {}
        for trip in candidates:
            result = _route(oracle, trip, vehicle, instance)
            if result is not None and result.feasible:
                level[trip] = result.length
        if not level:
            break
        found.update(level)
        previous = set(level)
        if size == 1:
            singles = sorted(t.requests[0] for t in level)
    return found


def catalog_stats(catalog: TripCatalog) -> CatalogStats:
    """
    Count trips by size, |T| and the number of admissible pairs sum_v |T(v)|.
    """
    counts: Dict[int, int] = {}
    for trip in catalog.trips:
        counts[len(trip)] = counts.get(len(trip), 0) + 1
    return CatalogStats(
        counts_by_size=dict(sorted(counts.items())),
        n_trips=len(catalog.trips),
        n_pairs=sum(len(costs) for costs in catalog.per_vehicle.values()),
    )


def recost_catalog(
    catalog: TripCatalog,
    instance: Instance,
    oracle: CostOracle = heuristic_cost,
) -> RecostResult:
    """
    Re-price every admissible pair with another oracle.

    Pairs the oracle cannot route keep their original cost and are listed in
    failures. alpha_hat is the largest new/original cost ratio (1 when both
    costs are zero).

    Args:
        catalog: Catalog priced by the exact oracle
        instance: Instance the catalog belongs to
        oracle: Alternative cost oracle

    Returns:
        RecostResult with the re-priced catalog
    """
    builder = CatalogBuilder(catalog.request_ids)
    for trip in catalog.trips[1:]:
        builder.add_trip(trip)
    alpha_hat = 1.0
    failures = []
    for vid, tid, cost in catalog.pairs():
        vehicle = instance.vehicle(vid)
        trip = catalog.trips[tid]
        new_cost = cost
        if not vehicle.is_dummy:
            result = _route(oracle, trip, vehicle, instance)
            if result is not None and result.feasible:
                new_cost = result.length
            else:
                failures.append((tid, vid))
        if cost > 0:
            alpha_hat = max(alpha_hat, new_cost / cost)
        builder.set_cost(trip, vid, new_cost)
    if failures:
        logger.warning(f"Oracle failed on {len(failures)} admissible pairs")
    return RecostResult(
        catalog=builder.build(truncated_at=catalog.truncated_at),
        alpha_hat=alpha_hat,
        failures=tuple(failures),
    )
