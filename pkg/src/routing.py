"""
Single-vehicle routing cost oracles.

exact_cost solves the open-path pickup-and-delivery problem with deadlines
and capacity exactly by dynamic programming over (visited stops, last stop).
heuristic_cost is a cheapest-insertion construction used as an
alpha-approximate oracle. Travel time is distance / speed and service at a
stop takes no time; a route starts at the vehicle position at its
available time.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Sequence, Tuple

from model import Instance, Trip, Vehicle, Point
from utils import get_logger

logger = get_logger(__name__)

# Largest number of stops the exact dynamic program accepts.
MAX_EXACT_STOPS = 16
# Slack on deadline comparisons (seconds).
DEADLINE_TOLERANCE = 1e-9


class StopKind(str, Enum):
    PICKUP = "pickup"
    DROPOFF = "dropoff"
    ONBOARD_DROPOFF = "onboard-dropoff"


@dataclass(frozen=True)
class Stop:
    """
    A route stop.

    ref is the request id for pickups and dropoffs, and the index into the
    vehicle's onboard list for onboard dropoffs.
    """

    kind: StopKind
    ref: int
    point: Point
    deadline: float
    load_delta: int


@dataclass(frozen=True)
class RouteResult:
    order: Tuple[Stop, ...]
    length: float
    feasible: bool


CostOracle = Callable[[Trip, Vehicle, Instance], RouteResult]


class StopCountOverflow(ValueError):
    """The trip has more stops than the exact method supports."""

    pass


def build_stops(trip: Trip, vehicle: Vehicle, instance: Instance) -> List[Stop]:
    """
    Stops of a (trip, vehicle) pair.

    Request r at trip position k yields a pickup at index 2k and its dropoff
    at 2k + 1; onboard dropoffs follow.
    """
    stops = []
    for r in trip:
        request = instance.request(r)
        stops.append(
            Stop(StopKind.PICKUP, r, request.origin, request.latest_pickup, 1)
        )
        stops.append(
            Stop(
                StopKind.DROPOFF,
                r,
                request.destination,
                instance.latest_dropoff(request),
                -1,
            )
        )
    for j, passenger in enumerate(vehicle.onboard):
        stops.append(
            Stop(
                StopKind.ONBOARD_DROPOFF,
                j,
                passenger.destination,
                passenger.latest_dropoff,
                -1,
            )
        )
    return stops


def evaluate_route(
    order: Sequence[Stop],
    vehicle: Vehicle,
    instance: Instance,
    enforce_deadlines: bool = True,
) -> RouteResult:
    """
    Length and feasibility of visiting stops in the given order.

    Partial routes are allowed: a dropoff only needs its pickup earlier in
    the order if that pickup is part of the route.

    Args:
        order: Stops in visiting order
        vehicle: Vehicle driving the route
        instance: Instance supplying metric and speed
        enforce_deadlines: Check stop deadlines

    Returns:
        RouteResult for the given order
    """
    position = vehicle.position
    length = 0.0
    load = len(vehicle.onboard)
    feasible = True
    in_route = {s.ref for s in order if s.kind == StopKind.PICKUP}
    picked = set()

    for stop in order:
        length += instance.distance(position, stop.point)
        position = stop.point
        arrival = vehicle.available_time + length / instance.speed
        if enforce_deadlines and arrival > stop.deadline + DEADLINE_TOLERANCE:
            feasible = False
        if stop.kind == StopKind.PICKUP:
            picked.add(stop.ref)
        elif stop.kind == StopKind.DROPOFF:
            if stop.ref in in_route and stop.ref not in picked:
                feasible = False
        load += stop.load_delta
        if load > vehicle.capacity:
            feasible = False

    return RouteResult(order=tuple(order), length=length, feasible=feasible)


def exact_cost(
    trip: Trip,
    vehicle: Vehicle,
    instance: Instance,
    enforce_deadlines: bool = True,
) -> RouteResult:
    """
    Minimum-length feasible route for a (trip, vehicle) pair.

    Dynamic program over (visited-stop subset, last stop) keeping the
    shortest partial route per state; arrival time is monotone in length,
    so the shortest state dominates. States that break a deadline,
    pickup-before-dropoff precedence, or capacity are pruned. Equal-length
    states keep the smaller predecessor stop index; equal-length final
    states resolve to the smaller last stop index.

    Args:
        trip: Requests to serve
        vehicle: Vehicle serving them (its onboard passengers included)
        instance: Instance supplying metric, speed and deadlines
        enforce_deadlines: Prune on deadlines (False gives the shortest
            precedence- and capacity-feasible route)

    Returns:
        Optimal RouteResult, or feasible=False if no feasible route exists

    Raises:
        StopCountOverflow: If the pair has more than MAX_EXACT_STOPS stops
    """
    stops = build_stops(trip, vehicle, instance)
    n = len(stops)
    if n > MAX_EXACT_STOPS:
        raise StopCountOverflow(
            f"{n} stops exceed the exact bound of {MAX_EXACT_STOPS}; "
            "use heuristic_cost"
        )
    if n == 0:
        return RouteResult(order=(), length=0.0, feasible=True)

    n_pairs = len(trip)
    start = [instance.distance(vehicle.position, s.point) for s in stops]
    dist = [[instance.distance(a.point, b.point) for b in stops] for a in stops]
    deadlines = [
        s.deadline + DEADLINE_TOLERANCE if enforce_deadlines else math.inf
        for s in stops
    ]
    t0 = vehicle.available_time
    speed = instance.speed
    capacity = vehicle.capacity

    def needs_pickup(j: int) -> int:
        # Bit of the pickup that must precede stop j, or 0.
        if j < 2 * n_pairs and j % 2 == 1:
            return 1 << (j - 1)
        return 0

    # (mask, last) -> (length, load); parents keyed the same way.
    layer: Dict[Tuple[int, int], Tuple[float, int]] = {}
    parents: Dict[Tuple[int, int], int] = {}
    base_load = len(vehicle.onboard)

    for j in range(n):
        if needs_pickup(j):
            continue
        load = base_load + stops[j].load_delta
        if load > capacity or t0 + start[j] / speed > deadlines[j]:
            continue
        layer[(1 << j, j)] = (start[j], load)
        parents[(1 << j, j)] = -1

    for _ in range(n - 1):
        nxt: Dict[Tuple[int, int], Tuple[float, int]] = {}
        for key in sorted(layer):
            mask, last = key
            length, load = layer[key]
            for j in range(n):
                bit = 1 << j
                if mask & bit:
                    continue
                pre = needs_pickup(j)
                if pre and not mask & pre:
                    continue
                new_load = load + stops[j].load_delta
                if new_load > capacity:
                    continue
                new_length = length + dist[last][j]
                if t0 + new_length / speed > deadlines[j]:
                    continue
                new_key = (mask | bit, j)
                best = nxt.get(new_key)
                if best is None or new_length < best[0]:
                    nxt[new_key] = (new_length, new_load)
                    parents[new_key] = last
        layer = nxt
        if not layer:
            break

    full = (1 << n) - 1
    finals = sorted(
        (length, last) for (mask, last), (length, _) in layer.items() if mask == full
    )
    if not finals:
        return RouteResult(order=tuple(stops), length=math.inf, feasible=False)

    length, last = finals[0]
    order = []
    mask = full
    while last != -1:
        order.append(stops[last])
        prev = parents[(mask, last)]
        mask &= ~(1 << last)
        last = prev
    order.reverse()
    return RouteResult(order=tuple(order), length=length, feasible=True)


def _insertion_orders(n_requests: int, attempts: int) -> List[List[int]]:
    # Rotations of the request order, then rotations of its reverse.
    orders = []
    base = list(range(n_requests))
    for a in range(attempts):
        seq = base[::-1] if (a // max(n_requests, 1)) % 2 else base
        shift = a % max(n_requests, 1)
        order = seq[shift:] + seq[:shift]
        if order not in orders:
            orders.append(order)
    return orders or [[]]


def heuristic_cost(trip: Trip, vehicle: Vehicle, instance: Instance) -> RouteResult:
    """
    Cheapest-insertion route for a (trip, vehicle) pair.

    Onboard dropoffs are inserted first, then each request's pickup and its
    dropoff, every stop at the feasible position of least length increase.
    When a stop cannot be inserted the construction restarts with another
    request order, up to one attempt per stop.

    Returns:
        A feasible RouteResult (never shorter than exact_cost), or
        feasible=False when no attempt succeeds
    """
    stops = build_stops(trip, vehicle, instance)
    if not stops:
        return RouteResult(order=(), length=0.0, feasible=True)

    n_requests = len(trip)
    onboard = stops[2 * n_requests:]

    for order in _insertion_orders(n_requests, len(stops)):
        route: List[Stop] = []
        units = [[s] for s in onboard] + [
            [stops[2 * k], stops[2 * k + 1]] for k in order
        ]
        failed = False
        for unit in units:
            for stop in unit:
                lo = 0
                if stop.kind == StopKind.DROPOFF:
                    lo = 1 + next(
                        i
                        for i, s in enumerate(route)
                        if s.kind == StopKind.PICKUP and s.ref == stop.ref
                    )
                best = None
                for pos in range(lo, len(route) + 1):
                    candidate = route[:pos] + [stop] + route[pos:]
                    result = evaluate_route(candidate, vehicle, instance)
                    if result.feasible and (best is None or result.length < best[0]):
                        best = (result.length, pos)
                if best is None:
                    failed = True
                    break
                route.insert(best[1], stop)
            if failed:
                break
        if not failed:
            return evaluate_route(route, vehicle, instance)

    logger.debug(
        f"Insertion failed for trip {list(trip)} on vehicle {vehicle.id}"
    )
    return RouteResult(order=tuple(stops), length=math.inf, feasible=False)


def trip_feasible(trip: Trip, vehicle: Vehicle, instance: Instance) -> bool:
    """
    True iff the pair has a route meeting every deadline, precedence and capacity.

    Raises:
        StopCountOverflow: As exact_cost
    """
    return exact_cost(trip, vehicle, instance).feasible
