"""
Penalty version and multi-round batch dispatch simulation.

add_dummies makes any instance feasible by giving every request a dummy
vehicle that can only serve that request, at the request's penalty. The simulation
runs rounds of batch assignment: waiting requests and the fleet are frozen
into an instance, solved, routes are committed, the fleet drives for one
batch interval, overdue requests renege and the rest carry over with their
penalties raised when they were rejected.
"""

import copy
import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from lp import LPResult, build_lp, solve_lp, support_histogram
from mip import solve_ilp
from model import (
    EMPTY_TRIP,
    Assignment,
    CatalogBuilder,
    FractionalSolution,
    Instance,
    OnboardPassenger,
    Point,
    QoS,
    Request,
    Trip,
    TripCatalog,
    Vehicle,
    build_assignment,
)
from rounding import round_dependent, round_deterministic
from routing import Stop, StopKind, exact_cost
from tripgen import generate_catalog
from utils import (
    RNG_ALGORITHM,
    Stopwatch,
    derive_seed,
    get_logger,
    make_rng,
    mean_sigma,
    read_json,
    round_float,
    write_json,
)
from validators import (
    ValidationError,
    validate_choice,
    validate_int,
    validate_non_negative,
    validate_object,
    validate_positive,
    validate_seed,
)

logger = get_logger(__name__)

# Sub-stream keys for derive_seed.
FLEET_STREAM = 0
ARRIVAL_STREAM = 1
ROUNDING_STREAM = 2

# Slack on the per-round driving budget (km).
BUDGET_TOLERANCE = 1e-9

CSV_COLUMNS = (
    "round",
    "method",
    "requests",
    "rejected_pct",
    "distance_km",
    "solve_ms",
    "lp_integral_frac",
    "lp_half_integral_frac",
)


class Method(str, Enum):
    ILP = "ilp"
    LP_RAND = "lp+rand"
    LP_DET = "lp+det"


class RequestStatus(str, Enum):
    WAITING = "waiting"
    REJECTED = "rejected"
    ONBOARD = "onboard"
    SERVED = "served"
    RENEGED = "reneged"


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty starts at base_multiplier x direct distance and grows per rejection."""

    base_multiplier: float = 10.0
    growth: float = 2.0

    def initial(self, direct_km: float) -> float:
        return self.base_multiplier * direct_km

    def augment(self, penalty: float) -> float:
        return penalty * self.growth


@dataclass(frozen=True)
class SimulationConfig:
    arrival_rate: float = 0.05
    horizon_rounds: int = 60
    batch_interval: float = 30.0
    fleet_size: int = 10
    capacity: int = 2
    region_size_km: float = 5.0
    speed: float = 0.01
    qos: QoS = QoS()
    penalty: PenaltySchedule = PenaltySchedule()
    methods: Tuple[str, ...] = (
        Method.ILP.value,
        Method.LP_RAND.value,
        Method.LP_DET.value,
    )
    driver: str = Method.ILP.value
    seeds: Tuple[int, ...] = (0,)
    max_trip_size: Optional[int] = None
    time_limit: Optional[float] = None
    tripgen_timeout: Optional[float] = None
    timings: bool = True


@dataclass
class WaitingRequest:
    request: Request
    penalty: float
    rounds_unassigned: int = 0


@dataclass
class FleetVehicle:
    """
    A real vehicle. route holds the stops still to visit; every dropoff stop
    refers to a request id, onboard passengers included.
    """

    id: int
    position: Point
    capacity: int
    onboard: List[OnboardPassenger] = field(default_factory=list)
    route: List[Stop] = field(default_factory=list)

    def as_vehicle(self, clock: float) -> Vehicle:
        return Vehicle(
            id=self.id,
            position=self.position,
            available_time=clock,
            capacity=self.capacity,
            onboard=tuple(self.onboard),
        )


@dataclass
class BatchMetrics:
    arrivals: int = 0
    served: int = 0
    reneged: int = 0
    distance_km: float = 0.0
    solve_ms: Dict[str, List[float]] = field(default_factory=dict)


@dataclass
class BatchState:
    clock: float
    round: int
    fleet: List[FleetVehicle]
    waiting: Dict[int, WaitingRequest] = field(default_factory=dict)
    status: Dict[int, RequestStatus] = field(default_factory=dict)
    metrics: BatchMetrics = field(default_factory=BatchMetrics)
    next_request_id: int = 0

    def counts(self) -> Dict[str, int]:
        counts = {s.value: 0 for s in RequestStatus}
        for status in self.status.values():
            counts[status.value] += 1
        return counts

    def conservation_holds(self) -> bool:
        """served + rejected + reneged + waiting + onboard = arrivals, consistently."""
        counts = self.counts()
        pooled = counts["waiting"] + counts["rejected"]
        onboard = sum(len(f.onboard) for f in self.fleet)
        return (
            sum(counts.values()) == self.metrics.arrivals
            and pooled == len(self.waiting)
            and counts[RequestStatus.ONBOARD.value] == onboard
            and counts[RequestStatus.SERVED.value] == self.metrics.served
            and counts[RequestStatus.RENEGED.value] == self.metrics.reneged
        )


@dataclass(frozen=True)
class RoundProblem:
    """A frozen round: waiting requests and fleet as a penalty-version instance."""

    instance: Instance
    catalog: TripCatalog


@dataclass(frozen=True)
class MethodOutcome:
    method: str
    assignment: Assignment
    rejected: Tuple[int, ...]
    distance_km: float
    penalty_paid: float
    solve_ms: float


@dataclass(frozen=True)
class RoundReport:
    round: int
    method: str
    requests: int
    rejected: int
    rejected_pct: float
    distance_km: float
    solve_ms: float
    cost: float
    lp_objective: Optional[float] = None
    lp_integral_frac: Optional[float] = None
    lp_half_integral_frac: Optional[float] = None
    integrality_gap: Optional[float] = None


@dataclass(frozen=True)
class SimulationReport:
    seed: int
    rows: Tuple[RoundReport, ...]
    aggregate: Dict[str, Any]
    state: BatchState


@dataclass(frozen=True)
class PenaltyTrialStats:
    trials: int
    mean_cost: float
    cost_sigma: float
    mean_penalty_paid: float
    penalty_total: float


@dataclass(frozen=True)
class SurvivalResult:
    """Fraction of requests still unassigned after n = 1..rounds rounds."""

    fractions: Tuple[float, ...]
    sigmas: Tuple[float, ...]
    replications: int


# -- penalty version ------------------------------------------------------


def add_dummies(instance: Instance) -> Instance:
    """
    Append one dummy vehicle per request, ids following the real vehicles.

    Dummy v_r admits only the empty trip (cost 0) and {r} (cost r.penalty). An
    explicit catalog on the instance is extended with the dummy entries.
    Requests that already have a dummy are skipped.

    Args:
        instance: Instance whose requests carry their penalties

    Returns:
        The penalty-version instance, always feasible
    """
    covered = {v.dummy_for for v in instance.vehicles if v.is_dummy}
    next_id = max((v.id for v in instance.vehicles), default=-1) + 1
    dummies = []
    for request in sorted(instance.requests, key=lambda r: r.id):
        if request.id in covered:
            continue
        dummies.append(
            Vehicle(
                id=next_id,
                position=request.origin,
                capacity=1,
                dummy_for=request.id,
            )
        )
        next_id += 1

    trips = instance.trips
    if trips is not None:
        builder = CatalogBuilder(trips.request_ids)
        for trip in trips.trips[1:]:
            builder.add_trip(trip)
        for vid, tid, cost in trips.pairs():
            builder.set_cost(trips.trips[tid], vid, cost)
        for dummy in dummies:
            builder.set_cost(EMPTY_TRIP, dummy.id, 0.0)
            penalty = instance.request(dummy.dummy_for).penalty
            builder.set_cost(Trip.of(dummy.dummy_for), dummy.id, penalty)
        trips = builder.build(truncated_at=trips.truncated_at)

    logger.debug(f"Added {len(dummies)} dummy vehicles")
    return replace(instance, vehicles=instance.vehicles + tuple(dummies), trips=trips)


def cover_with_dummies(
    assignment: Assignment, catalog: TripCatalog, instance: Instance
) -> Assignment:
    """Assign every request left uncovered to its dummy vehicle, paying its penalty."""
    dummy_of = {v.dummy_for: v.id for v in instance.vehicles if v.is_dummy}
    choices = dict(assignment.by_vehicle)
    for r in sorted(assignment.unassigned):
        vid = dummy_of.get(r)
        if vid is not None:
            choices[vid] = catalog.trip_id(Trip.of(r))
    return build_assignment(choices, catalog)


def _split_cost(
    assignment: Assignment, catalog: TripCatalog, instance: Instance
) -> Tuple[float, float, Tuple[int, ...]]:
    # (real-vehicle cost, penalties paid, requests served by dummies)
    real, paid, rejected = [], [], []
    for vid, tid in sorted(assignment.by_vehicle.items()):
        cost = catalog.cost(tid, vid)
        if instance.vehicle(vid).is_dummy:
            paid.append(cost)
            rejected.extend(catalog.trips[tid])
        else:
            real.append(cost)
    return math.fsum(real), math.fsum(paid), tuple(sorted(rejected))


def penalty_rounding_trials(
    x: FractionalSolution,
    catalog: TripCatalog,
    instance: Instance,
    trials: int,
    base_seed: int = 0,
) -> PenaltyTrialStats:
    """
    Dependent rounding on a penalty-version LP solution, uncovered requests
    sent to their dummies; trial i uses seed base_seed + i.

    Returns:
        Mean total cost (real routes plus penalties paid) and its standard error
    """
    costs = np.empty(trials)
    paid = np.empty(trials)
    for i in range(trials):
        assignment = cover_with_dummies(
            round_dependent(x, catalog, base_seed + i), catalog, instance
        )
        _, penalty, _ = _split_cost(assignment, catalog, instance)
        costs[i] = assignment.cost
        paid[i] = penalty
    return PenaltyTrialStats(
        trials=trials,
        mean_cost=float(costs.mean()),
        cost_sigma=mean_sigma(costs),
        mean_penalty_paid=float(paid.mean()),
        penalty_total=math.fsum(r.penalty for r in instance.requests),
    )


def repeated_rounding_survival(
    x: FractionalSolution,
    catalog: TripCatalog,
    rounds: int,
    replications: int,
    base_seed: int = 0,
    instance: Optional[Instance] = None,
) -> SurvivalResult:
    """
    Re-round the same solution over consecutive rounds and track which
    requests have never been assigned to a real vehicle.

    Round n of replication j uses seed derive_seed(base_seed, j, n).

    Args:
        x: Fractional solution recurring every round
        catalog: Catalog x is indexed against
        rounds: Number of rounds
        replications: Independent replications
        base_seed: Base seed
        instance: Identifies dummy vehicles, whose coverage does not count

    Returns:
        SurvivalResult with one fraction per round
    """
    dummies = set()
    if instance is not None:
        dummies = {v.id for v in instance.vehicles if v.is_dummy}
    requests = list(catalog.request_ids)
    fractions = np.zeros((replications, rounds))
    for j in range(replications):
        remaining = set(requests)
        for n in range(rounds):
            assignment = round_dependent(x, catalog, derive_seed(base_seed, j, n))
            for vid, tid in assignment.by_vehicle.items():
                if vid not in dummies:
                    remaining.difference_update(catalog.trips[tid])
            fractions[j, n] = len(remaining) / len(requests) if requests else 0.0
    return SurvivalResult(
        fractions=tuple(float(f) for f in fractions.mean(axis=0)),
        sigmas=tuple(mean_sigma(fractions[:, n]) for n in range(rounds)),
        replications=replications,
    )


# -- configuration --------------------------------------------------------


def _optional_positive(data: Mapping[str, Any], key: str) -> Optional[float]:
    value = data.get(key)
    return None if value is None else validate_positive(value, key)


def simulation_config_from_dict(data: Any) -> SimulationConfig:
    """
    Validate a simulation config object; absent keys take their defaults.

    Raises:
        ValidationError: Naming the first failing field
    """
    validate_object(data, "config", [])
    defaults = SimulationConfig()
    qos_data = validate_object(data.get("qos", {}), "qos", [])
    penalty_data = validate_object(data.get("penalty", {}), "penalty", [])

    methods = data.get("methods", list(defaults.methods))
    if not isinstance(methods, list) or not methods:
        raise ValidationError("methods must be a non-empty array")
    choices = [m.value for m in Method]
    methods = tuple(validate_choice(m, "methods[]", choices) for m in methods)
    driver = validate_choice(data.get("driver", methods[0]), "driver", choices)

    seeds = data.get("seeds", list(defaults.seeds))
    if not isinstance(seeds, list) or not seeds:
        raise ValidationError("seeds must be a non-empty array")

    growth = validate_non_negative(
        penalty_data.get("growth", defaults.penalty.growth), "penalty.growth"
    )
    if growth < 1:
        raise ValidationError(f"penalty.growth must be >= 1, got {growth}")

    max_trip_size = data.get("max_trip_size")
    timings = data.get("timings", defaults.timings)
    if not isinstance(timings, bool):
        raise ValidationError("timings must be a boolean")

    return SimulationConfig(
        arrival_rate=validate_non_negative(
            data.get("arrival_rate", defaults.arrival_rate), "arrival_rate"
        ),
        horizon_rounds=validate_int(
            data.get("horizon_rounds", defaults.horizon_rounds),
            "horizon_rounds",
            minimum=0,
        ),
        batch_interval=validate_positive(
            data.get("batch_interval", defaults.batch_interval), "batch_interval"
        ),
        fleet_size=validate_int(
            data.get("fleet_size", defaults.fleet_size), "fleet_size", minimum=0
        ),
        capacity=validate_int(
            data.get("capacity", defaults.capacity), "capacity", minimum=1
        ),
        region_size_km=validate_positive(
            data.get("region_size_km", defaults.region_size_km), "region_size_km"
        ),
        speed=validate_positive(data.get("speed", defaults.speed), "speed"),
        qos=QoS(
            max_wait=validate_non_negative(
                qos_data.get("max_wait", QoS.max_wait), "qos.max_wait"
            ),
            max_delay=validate_non_negative(
                qos_data.get("max_delay", QoS.max_delay), "qos.max_delay"
            ),
        ),
        penalty=PenaltySchedule(
            base_multiplier=validate_non_negative(
                penalty_data.get("base_multiplier", defaults.penalty.base_multiplier),
                "penalty.base_multiplier",
            ),
            growth=growth,
        ),
        methods=methods,
        driver=driver,
        seeds=tuple(validate_seed(s, "seeds[]") for s in seeds),
        max_trip_size=(
            None
            if max_trip_size is None
            else validate_int(max_trip_size, "max_trip_size", minimum=1)
        ),
        time_limit=_optional_positive(data, "time_limit"),
        tripgen_timeout=_optional_positive(data, "tripgen_timeout"),
        timings=timings,
    )


def load_simulation_config(path: Union[str, Path]) -> SimulationConfig:
    """
    Load and validate a simulation config file.

    Raises:
        ValidationError: On malformed JSON or an invalid field
        OSError: If the file cannot be read
    """
    config = simulation_config_from_dict(read_json(path))
    logger.info(
        f"Loaded simulation config '{path}': {config.horizon_rounds} rounds, "
        f"{config.fleet_size} vehicles, methods {', '.join(config.methods)}"
    )
    return config


# -- rounds ---------------------------------------------------------------


def _uniform_point(rng: np.random.Generator, size: float) -> Point:
    x, y = rng.uniform(0.0, size, 2)
    return (round_float(float(x)), round_float(float(y)))


def initial_state(config: SimulationConfig, seed: int) -> BatchState:
    """Idle fleet placed uniformly in the region, clock 0, no requests."""
    rng = make_rng(derive_seed(seed, FLEET_STREAM))
    fleet = [
        FleetVehicle(
            id=v,
            position=_uniform_point(rng, config.region_size_km),
            capacity=config.capacity,
        )
        for v in range(config.fleet_size)
    ]
    return BatchState(clock=0.0, round=0, fleet=fleet)


def generate_arrivals(
    config: SimulationConfig, seed: int, round_index: int, clock: float, first_id: int
) -> List[Request]:
    """
    Poisson(arrival_rate x batch_interval) requests for one round, with
    uniform origins and destinations and request time equal to the clock.
    """
    rng = make_rng(derive_seed(seed, round_index, ARRIVAL_STREAM))
    count = int(rng.poisson(config.arrival_rate * config.batch_interval))
    requests = []
    for k in range(count):
        origin = _uniform_point(rng, config.region_size_km)
        destination = _uniform_point(rng, config.region_size_km)
        requests.append(
            Request(
                id=first_id + k,
                origin=origin,
                destination=destination,
                request_time=clock,
                max_wait=config.qos.max_wait,
                max_delay=config.qos.max_delay,
            )
        )
    return requests


def admit(
    state: BatchState, arrivals: Iterable[Request], config: SimulationConfig
) -> BatchState:
    """Copy of state with new arrivals waiting at their initial penalty."""
    new = copy.deepcopy(state)
    for request in arrivals:
        if request.id in new.status:
            raise ValidationError(f"request id {request.id} already arrived")
        direct = math.dist(request.origin, request.destination)
        penalty = config.penalty.initial(direct)
        new.waiting[request.id] = WaitingRequest(request, penalty)
        new.status[request.id] = RequestStatus.WAITING
        new.metrics.arrivals += 1
        new.next_request_id = max(new.next_request_id, request.id + 1)
    return new


def freeze_round(state: BatchState, config: SimulationConfig) -> RoundProblem:
    """Penalty-version instance of the waiting requests and fleet, with its catalog."""
    requests = tuple(
        replace(w.request, penalty=w.penalty)
        for _, w in sorted(state.waiting.items())
    )
    vehicles = tuple(f.as_vehicle(state.clock) for f in state.fleet)
    instance = add_dummies(
        Instance(
            requests=requests, vehicles=vehicles, speed=config.speed, qos=config.qos
        )
    )
    catalog = generate_catalog(
        instance, max_trip_size=config.max_trip_size, timeout=config.tripgen_timeout
    )
    return RoundProblem(instance=instance, catalog=catalog)


def solve_round(
    problem: RoundProblem,
    method: Union[Method, str],
    seed: int,
    lp_result: Optional[LPResult] = None,
    lp_ms: float = 0.0,
    time_limit: Optional[float] = None,
) -> MethodOutcome:
    """
    Solve a frozen round with one method.

    Rounding methods send requests left uncovered by real vehicles to their
    dummies. A precomputed LP result may be shared; its solve time lp_ms is
    charged to the rounding methods.

    Raises:
        RuntimeError: If the ILP returns no assignment
    """
    method = Method(method)
    watch = Stopwatch()
    extra_ms = 0.0
    if method == Method.ILP:
        result = solve_ilp(build_lp(problem.catalog, problem.instance), time_limit)
        if result.assignment is None:
            raise RuntimeError(f"ILP returned no assignment ({result.status})")
        assignment = result.assignment
    else:
        if lp_result is None:
            lp_result = solve_lp(build_lp(problem.catalog, problem.instance))
        else:
            extra_ms = lp_ms
        if method == Method.LP_RAND:
            rounded = round_dependent(lp_result.primal, problem.catalog, seed)
        else:
            rounded = round_deterministic(lp_result.primal, problem.catalog)
        assignment = cover_with_dummies(rounded, problem.catalog, problem.instance)
    real, paid, rejected = _split_cost(assignment, problem.catalog, problem.instance)
    return MethodOutcome(
        method=method.value,
        assignment=assignment,
        rejected=rejected,
        distance_km=real,
        penalty_paid=paid,
        solve_ms=watch.elapsed_ms + extra_ms,
    )


def _plan_route(vehicle: Vehicle, trip: Trip, instance: Instance) -> List[Stop]:
    result = exact_cost(trip, vehicle, instance)
    if not result.feasible:
        result = exact_cost(trip, vehicle, instance, enforce_deadlines=False)
    route = []
    for stop in result.order:
        if stop.kind == StopKind.ONBOARD_DROPOFF:
            passenger = vehicle.onboard[stop.ref]
            stop = replace(stop, kind=StopKind.DROPOFF, ref=passenger.request_id)
        route.append(stop)
    return route


def _drive(state: BatchState, config: SimulationConfig) -> float:
    """Move every vehicle along its route for one batch interval; returns km driven."""
    budget_km = config.speed * config.batch_interval
    total = 0.0
    for vehicle in state.fleet:
        budget = budget_km
        while vehicle.route:
            stop = vehicle.route[0]
            leg = math.dist(vehicle.position, stop.point)
            if leg > budget + BUDGET_TOLERANCE:
                fraction = budget / leg
                px, py = vehicle.position
                qx, qy = stop.point
                vehicle.position = (
                    px + fraction * (qx - px),
                    py + fraction * (qy - py),
                )
                total += budget
                break
            budget -= leg
            total += leg
            vehicle.position = stop.point
            vehicle.route.pop(0)
            arrival = state.clock + (budget_km - budget) / config.speed
            if stop.kind == StopKind.PICKUP:
                waiting = state.waiting.pop(stop.ref)
                request = waiting.request
                latest = (
                    request.request_time
                    + math.dist(request.origin, request.destination) / config.speed
                    + request.max_delay
                )
                vehicle.onboard.append(
                    OnboardPassenger(request.destination, latest, request.id)
                )
                state.status[request.id] = RequestStatus.ONBOARD
                logger.debug(
                    f"Vehicle {vehicle.id} picked up {request.id} at {arrival:.1f}s"
                )
            else:
                vehicle.onboard = [
                    p for p in vehicle.onboard if p.request_id != stop.ref
                ]
                state.status[stop.ref] = RequestStatus.SERVED
                state.metrics.served += 1
                logger.debug(
                    f"Vehicle {vehicle.id} dropped off {stop.ref} at {arrival:.1f}s"
                )
    return total


def _close_round(state: BatchState, config: SimulationConfig) -> None:
    state.clock += config.batch_interval
    state.round += 1
    for rid in sorted(state.waiting):
        if state.waiting[rid].request.latest_pickup < state.clock - BUDGET_TOLERANCE:
            del state.waiting[rid]
            state.status[rid] = RequestStatus.RENEGED
            state.metrics.reneged += 1


def apply_outcome(
    state: BatchState,
    problem: Optional[RoundProblem],
    outcome: Optional[MethodOutcome],
    config: SimulationConfig,
) -> Tuple[BatchState, float]:
    """
    Commit an outcome, drive one interval, renege overdue requests.

    Without an outcome every vehicle keeps delivering its onboard passengers.
    Rejected requests get their penalty augmented; assigned requests not yet
    picked up return to the waiting pool for the next round.

    Returns:
        (new state, km driven this round)
    """
    new = copy.deepcopy(state)
    if outcome is not None:
        catalog = problem.catalog
        instance = problem.instance
        rejected = set(outcome.rejected)
        for rid in sorted(new.waiting):
            waiting = new.waiting[rid]
            if rid in rejected:
                waiting.penalty = config.penalty.augment(waiting.penalty)
                waiting.rounds_unassigned += 1
                new.status[rid] = RequestStatus.REJECTED
            else:
                new.status[rid] = RequestStatus.WAITING
        for vehicle in new.fleet:
            trip = catalog.trips[outcome.assignment.trip_of(vehicle.id)]
            vehicle.route = _plan_route(instance.vehicle(vehicle.id), trip, instance)
    else:
        instance = Instance(
            requests=(),
            vehicles=tuple(f.as_vehicle(new.clock) for f in new.fleet),
            speed=config.speed,
            qos=config.qos,
        )
        for vehicle in new.fleet:
            idle = instance.vehicle(vehicle.id)
            vehicle.route = _plan_route(idle, EMPTY_TRIP, instance)

    driven = _drive(new, config)
    new.metrics.distance_km += driven
    _close_round(new, config)
    if not new.conservation_holds():
        logger.error(f"Request conservation violated after round {state.round}")
    return new, driven


def run_round(
    state: BatchState,
    method: Union[Method, str],
    seed: int,
    config: SimulationConfig,
    arrivals: Sequence[Request] = (),
) -> Tuple[BatchState, RoundReport]:
    """
    One batch round: admit arrivals, solve, commit, drive, renege.

    The input state is never modified, so a solver error leaves it intact.

    Args:
        state: Current state
        method: ilp, lp+rand or lp+det
        seed: Seed for the rounding draw
        config: Simulation config
        arrivals: Requests arriving for this round

    Returns:
        (new state, round report)
    """
    method = Method(method)
    current = admit(state, arrivals, config)
    if not current.waiting:
        new, driven = apply_outcome(current, None, None, config)
        return new, RoundReport(current.round, method.value, 0, 0, 0.0, 0.0, 0.0, 0.0)

    problem = freeze_round(current, config)
    outcome = solve_round(problem, method, seed, time_limit=config.time_limit)
    new, _ = apply_outcome(current, problem, outcome, config)
    new.metrics.solve_ms.setdefault(method.value, []).append(outcome.solve_ms)
    n = len(current.waiting)
    return new, RoundReport(
        round=current.round,
        method=method.value,
        requests=n,
        rejected=len(outcome.rejected),
        rejected_pct=100.0 * len(outcome.rejected) / n,
        distance_km=outcome.distance_km,
        solve_ms=outcome.solve_ms if config.timings else 0.0,
        cost=outcome.assignment.cost,
    )


# -- simulation -----------------------------------------------------------


def _summary(values: Sequence[float]) -> Dict[str, float]:
    if not values:
        return {"mean": 0.0, "median": 0.0}
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "median": float(np.median(arr))}


def _aggregate(
    config: SimulationConfig,
    seed: int,
    rows: Sequence[RoundReport],
    state: BatchState,
    histogram: np.ndarray,
    non_integral: np.ndarray,
) -> Dict[str, Any]:
    methods: Dict[str, Any] = {}
    for method in config.methods:
        mine = [r for r in rows if r.method == method and r.requests > 0]
        methods[method] = {
            "rejected_pct": _summary([r.rejected_pct for r in mine]),
            "distance_km": _summary([r.distance_km for r in mine]),
            "solve_ms": _summary([r.solve_ms for r in mine]),
            "rounds_solved": len(mine),
        }
    ilp_ms = methods.get(Method.ILP.value, {}).get("solve_ms", {}).get("mean", 0.0)
    for method, entry in methods.items():
        mean_ms = entry["solve_ms"]["mean"]
        entry["solve_ms_change_vs_ilp_pct"] = (
            100.0 * (mean_ms - ilp_ms) / ilp_ms if ilp_ms > 0 else None
        )

    solved = [r for r in rows if r.requests > 0 and r.lp_integral_frac is not None]
    first_per_round = {r.round: r for r in solved}
    gaps = [r.integrality_gap for r in rows if r.integrality_gap is not None]
    counts = state.counts()
    return {
        "seed": seed,
        "rng": RNG_ALGORITHM,
        "rounds": config.horizon_rounds,
        "driver": config.driver,
        "methods": methods,
        "lp_support": {
            "integral_frac_mean": _summary(
                [r.lp_integral_frac for r in first_per_round.values()]
            )["mean"],
            "half_integral_frac_mean": _summary(
                [r.lp_half_integral_frac for r in first_per_round.values()]
            )["mean"],
            "histogram": [int(c) for c in histogram],
            "non_integral_histogram": [int(c) for c in non_integral],
        },
        "integrality_gap": {
            "mean": _summary(gaps)["mean"],
            "max": max(gaps) if gaps else None,
        },
        "totals": {"arrivals": state.metrics.arrivals, **counts},
        "distance_traveled_km": state.metrics.distance_km,
        "conservation_holds": state.conservation_holds(),
    }


def run_simulation(
    config: SimulationConfig, seed: int, bins: int = 10
) -> SimulationReport:
    """
    Simulate config.horizon_rounds batch rounds.

    Each round's frozen instance is solved by every configured method; the
    driver method's outcome evolves the state, so all methods see the same
    instance sequence. The LP is solved every round for its support
    statistics and shared by the rounding methods.

    Args:
        config: Validated simulation config
        seed: Replication seed
        bins: Support histogram bins

    Returns:
        SimulationReport with one row per (round, method) and the aggregate
    """
    watch = Stopwatch()
    logger.info(f"Starting simulation seed={seed} for {config.horizon_rounds} rounds")
    state = initial_state(config, seed)
    rows: List[RoundReport] = []
    histogram = np.zeros(bins, dtype=int)
    non_integral = np.zeros(bins, dtype=int)
    solvers = list(dict.fromkeys(list(config.methods) + [config.driver]))

    for n in range(config.horizon_rounds):
        arrivals = generate_arrivals(
            config, seed, n, state.clock, state.next_request_id
        )
        state = admit(state, arrivals, config)
        if not state.waiting:
            for method in config.methods:
                rows.append(RoundReport(n, method, 0, 0, 0.0, 0.0, 0.0, 0.0))
            state, _ = apply_outcome(state, None, None, config)
            continue

        problem = freeze_round(state, config)
        lp_watch = Stopwatch()
        lp_result = solve_lp(build_lp(problem.catalog, problem.instance))
        lp_ms = lp_watch.elapsed_ms
        support = support_histogram(lp_result.primal, bins)
        histogram += support.counts
        non_integral += support.non_integral_counts

        rounding_seed = derive_seed(seed, n, ROUNDING_STREAM)
        outcomes = {
            method: solve_round(
                problem, method, rounding_seed, lp_result, lp_ms, config.time_limit
            )
            for method in solvers
        }
        gap = None
        if Method.ILP.value in outcomes and lp_result.objective > 0:
            gap = outcomes[Method.ILP.value].assignment.cost / lp_result.objective

        requests = len(state.waiting)
        for method in config.methods:
            outcome = outcomes[method]
            state.metrics.solve_ms.setdefault(method, []).append(outcome.solve_ms)
            rows.append(
                RoundReport(
                    round=n,
                    method=method,
                    requests=requests,
                    rejected=len(outcome.rejected),
                    rejected_pct=100.0 * len(outcome.rejected) / requests,
                    distance_km=outcome.distance_km,
                    solve_ms=outcome.solve_ms if config.timings else 0.0,
                    cost=outcome.assignment.cost,
                    lp_objective=lp_result.objective,
                    lp_integral_frac=support.integral_fraction,
                    lp_half_integral_frac=support.half_integral_fraction,
                    integrality_gap=gap,
                )
            )
        state, _ = apply_outcome(state, problem, outcomes[config.driver], config)
        logger.debug(
            f"Round {n}: {requests} requests, "
            f"{len(outcomes[config.driver].rejected)} rejected by {config.driver}"
        )

    aggregate = _aggregate(config, seed, rows, state, histogram, non_integral)
    logger.info(
        f"Simulation seed={seed} finished in {watch.elapsed:.2f}s: "
        f"{state.metrics.served} served, {state.metrics.reneged} reneged"
    )
    return SimulationReport(
        seed=seed, rows=tuple(rows), aggregate=aggregate, state=state
    )


def write_round_csv(rows: Iterable[RoundReport], path: Union[str, Path]) -> None:
    """Per-round report: one row per (round, method) with CSV_COLUMNS."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.round,
                    r.method,
                    r.requests,
                    round_float(r.rejected_pct),
                    round_float(r.distance_km),
                    round_float(r.solve_ms),
                    ""
                    if r.lp_integral_frac is None
                    else round_float(r.lp_integral_frac),
                    ""
                    if r.lp_half_integral_frac is None
                    else round_float(r.lp_half_integral_frac),
                ]
            )


def write_aggregate(aggregate: Mapping[str, Any], path: Union[str, Path]) -> None:
    write_json(dict(aggregate), path)
