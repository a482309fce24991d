"""
Domain model for the request-trip-vehicle (RTV) assignment problem.

Holds the immutable value types shared by every solver module (requests,
vehicles, trips, instances, trip catalogs, fractional and integral
solutions, dual solutions) together with the instance, catalog and
solution file formats.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Any,
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Tuple,
    Union,
)

from utils import get_logger, read_json, write_json
from validators import (
    ValidationError,
    validate_int,
    validate_metric_matrix,
    validate_non_negative,
    validate_number,
    validate_object,
    validate_point,
    validate_positive,
    validate_unique_ids,
)

logger = get_logger(__name__)

Point = Tuple[float, float]

# Tolerance for the row sums of a fractional solution.
ROW_TOLERANCE = 1e-6
# Tolerance when comparing stored and recomputed assignment costs.
COST_TOLERANCE = 1e-9
# Slack allowed by the monotonicity check on catalog costs.
MONOTONICITY_TOLERANCE = 1e-9


class InadmissiblePairError(ValidationError):
    """A (trip, vehicle) pair is not admissible in the catalog."""

    def __init__(self, trip_id: int, vehicle_id: int):
        super().__init__(
            f"trip {trip_id} is not admissible for vehicle {vehicle_id}"
        )
        self.trip_id = trip_id
        self.vehicle_id = vehicle_id


@dataclass(frozen=True)
class Request:
    """A travel request r with its quality-of-service window and penalty."""

    id: int
    origin: Point
    destination: Point
    request_time: float = 0.0
    max_wait: float = 300.0
    max_delay: float = 600.0
    penalty: float = 0.0

    @property
    def latest_pickup(self) -> float:
        return self.request_time + self.max_wait


@dataclass(frozen=True)
class OnboardPassenger:
    """A passenger already picked up by a vehicle."""

    destination: Point
    latest_dropoff: float
    request_id: Optional[int] = None


@dataclass(frozen=True)
class Vehicle:
    """
    A vehicle v of capacity k.

    A vehicle with dummy_for set is the penalty-version dummy of that
    request: it only admits the empty trip and the singleton of its request.
    """

    id: int
    position: Point
    available_time: float = 0.0
    capacity: int = 1
    onboard: Tuple[OnboardPassenger, ...] = ()
    dummy_for: Optional[int] = None

    @property
    def is_dummy(self) -> bool:
        return self.dummy_for is not None


@dataclass(frozen=True, order=True)
class Trip:
    """A set of requests served together; stored sorted so equal sets compare equal."""

    requests: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(sorted(set(self.requests))))

    @classmethod
    def of(cls, *request_ids: int) -> "Trip":
        return cls(tuple(request_ids))

    def __len__(self) -> int:
        return len(self.requests)

    def __iter__(self) -> Iterator[int]:
        return iter(self.requests)

    def __contains__(self, request_id: object) -> bool:
        return request_id in self.requests

    def without(self, *request_ids: int) -> "Trip":
        drop = set(request_ids)
        return Trip(tuple(r for r in self.requests if r not in drop))

    def union(self, other: "Trip") -> "Trip":
        return Trip(self.requests + other.requests)

    @property
    def is_empty(self) -> bool:
        return not self.requests


EMPTY_TRIP = Trip()


class EuclideanMetric:
    """Straight-line distances in kilometers."""

    def distance(self, p: Point, q: Point) -> float:
        return math.dist(p, q)

    def to_json(self) -> Any:
        return "euclidean"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EuclideanMetric)

    def __hash__(self) -> int:
        return hash("euclidean")


class MatrixMetric:
    """Explicit symmetric distance matrix over a fixed list of points."""

    def __init__(self, points: List[Point], matrix: List[List[float]]):
        self.points = [tuple(p) for p in points]
        self.matrix = matrix
        self._index = {p: i for i, p in enumerate(self.points)}

    def index_of(self, p: Point) -> int:
        try:
            return self._index[tuple(p)]
        except KeyError:
            raise ValidationError(f"point {list(p)} is not listed in metric.points")

    def distance(self, p: Point, q: Point) -> float:
        return self.matrix[self.index_of(p)][self.index_of(q)]

    def to_json(self) -> Any:
        return {"matrix": self.matrix, "points": [list(p) for p in self.points]}

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, MatrixMetric)
            and self.points == other.points
            and self.matrix == other.matrix
        )

    def __hash__(self) -> int:
        return hash(tuple(self.points))


Metric = Union[EuclideanMetric, MatrixMetric]


@dataclass(frozen=True)
class QoS:
    """Default quality-of-service parameters (seconds)."""

    max_wait: float = 300.0
    max_delay: float = 600.0


@dataclass(frozen=True, eq=False)
class TripCatalog:
    """
    Feasible trip set T with per-vehicle admissible lists T(v) and costs c_tv.

    Trip ids index into trips; trip 0 is always the empty trip.
    per_vehicle maps vehicle id -> {trip id: cost} in ascending trip id.
    """

    trips: Tuple[Trip, ...]
    per_vehicle: Mapping[int, Mapping[int, float]]
    request_ids: Tuple[int, ...]
    truncated_at: Optional[int] = None
    per_request: Mapping[int, Tuple[int, ...]] = field(
        init=False, repr=False, compare=False
    )
    _index: Mapping[Trip, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.trips or self.trips[0] != EMPTY_TRIP:
            raise ValidationError("trip 0 must be the empty trip")
        index = {trip: tid for tid, trip in enumerate(self.trips)}
        if len(index) != len(self.trips):
            raise ValidationError("catalog trips must be distinct")

        admissible_anywhere = set()
        for costs in self.per_vehicle.values():
            admissible_anywhere.update(costs)

        per_request: Dict[int, List[int]] = {r: [] for r in self.request_ids}
        for tid in sorted(admissible_anywhere):
            for r in self.trips[tid]:
                per_request.setdefault(r, []).append(tid)

        object.__setattr__(self, "_index", index)
        object.__setattr__(
            self, "per_request", {r: tuple(t) for r, t in per_request.items()}
        )

    @property
    def vehicle_ids(self) -> List[int]:
        return sorted(self.per_vehicle)

    def trip_id(self, trip: Trip) -> Optional[int]:
        return self._index.get(trip)

    def admissible(self, trip_id: int, vehicle_id: int) -> bool:
        return trip_id in self.per_vehicle.get(vehicle_id, {})

    def cost(self, trip_id: int, vehicle_id: int) -> float:
        """
        Cost c_tv of an admissible pair.

        Raises:
            InadmissiblePairError: If (trip_id, vehicle_id) is not admissible
        """
        try:
            return self.per_vehicle[vehicle_id][trip_id]
        except KeyError:
            raise InadmissiblePairError(trip_id, vehicle_id) from None

    def pairs(self) -> Iterator[Tuple[int, int, float]]:
        """Yield (vehicle id, trip id, cost) ordered by vehicle id then trip id."""
        for vid in self.vehicle_ids:
            for tid, cost in self.per_vehicle[vid].items():
                yield vid, tid, cost


class CatalogBuilder:
    """Incrementally assemble a TripCatalog with dense trip ids."""

    def __init__(self, request_ids: Iterable[int]):
        self.request_ids = tuple(sorted(request_ids))
        self.trips: List[Trip] = [EMPTY_TRIP]
        self._index: Dict[Trip, int] = {EMPTY_TRIP: 0}
        self.costs: Dict[int, Dict[int, float]] = {}

    def add_trip(self, trip: Trip) -> int:
        """
        Register a trip, returning its id (existing id if already present).
        """
        tid = self._index.get(trip)
        if tid is None:
            tid = len(self.trips)
            self.trips.append(trip)
            self._index[trip] = tid
        return tid

    def add_vehicle(self, vehicle_id: int) -> None:
        self.costs.setdefault(vehicle_id, {})

    def set_cost(self, trip: Trip, vehicle_id: int, cost: float) -> int:
        """
        Make trip admissible for a vehicle at the given cost.

        Returns:
            The trip id
        """
        tid = self.add_trip(trip)
        self.costs.setdefault(vehicle_id, {})[tid] = float(cost)
        return tid

    def has(self, trip: Trip, vehicle_id: int) -> bool:
        tid = self._index.get(trip)
        return tid is not None and tid in self.costs.get(vehicle_id, {})

    def build(self, truncated_at: Optional[int] = None) -> TripCatalog:
        per_vehicle = {
            vid: dict(sorted(costs.items()))
            for vid, costs in sorted(self.costs.items())
        }
        return TripCatalog(
            trips=tuple(self.trips),
            per_vehicle=per_vehicle,
            request_ids=self.request_ids,
            truncated_at=truncated_at,
        )


@dataclass(frozen=True, eq=False)
class Instance:
    """
    An RTV assignment instance over the ground set R and V.

    trips holds an explicit precomputed catalog (analytic families); when it
    is None the catalog is generated by routing. synthetic marks instances
    whose requests may share origin and destination.
    """

    requests: Tuple[Request, ...]
    vehicles: Tuple[Vehicle, ...]
    metric: Metric = field(default_factory=EuclideanMetric)
    speed: float = 0.01
    qos: QoS = QoS()
    trips: Optional[TripCatalog] = None
    synthetic: bool = False
    _requests_by_id: Mapping[int, Request] = field(
        init=False, repr=False, compare=False
    )
    _vehicles_by_id: Mapping[int, Vehicle] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        object.__setattr__(
            self, "_requests_by_id", {r.id: r for r in self.requests}
        )
        object.__setattr__(
            self, "_vehicles_by_id", {v.id: v for v in self.vehicles}
        )

    @property
    def request_ids(self) -> List[int]:
        return sorted(self._requests_by_id)

    @property
    def vehicle_ids(self) -> List[int]:
        return sorted(self._vehicles_by_id)

    @property
    def real_vehicles(self) -> List[Vehicle]:
        return [v for v in self.vehicles if not v.is_dummy]

    @property
    def has_dummies(self) -> bool:
        return any(v.is_dummy for v in self.vehicles)

    def request(self, request_id: int) -> Request:
        return self._requests_by_id[request_id]

    def vehicle(self, vehicle_id: int) -> Vehicle:
        return self._vehicles_by_id[vehicle_id]

    def distance(self, p: Point, q: Point) -> float:
        return self.metric.distance(p, q)

    def travel_time(self, p: Point, q: Point) -> float:
        return self.metric.distance(p, q) / self.speed

    def direct_distance(self, request: Request) -> float:
        return self.distance(request.origin, request.destination)

    def latest_dropoff(self, request: Request) -> float:
        return (
            request.request_time
            + self.travel_time(request.origin, request.destination)
            + request.max_delay
        )


@dataclass(frozen=True)
class CatalogViolation:
    """One failed catalog invariant, naming the trip, vehicle and request involved."""

    kind: str
    trip_id: int
    vehicle_id: int
    request_id: Optional[int] = None
    detail: str = ""


@dataclass(frozen=True)
class FractionalSolution:
    """Sparse LP solution x_tv keyed by (trip id, vehicle id)."""

    values: Mapping[Tuple[int, int], float]
    objective: float

    def value(self, trip_id: int, vehicle_id: int) -> float:
        return self.values.get((trip_id, vehicle_id), 0.0)

    def support(self, threshold: float = 1e-7) -> Dict[Tuple[int, int], float]:
        return {key: x for key, x in self.values.items() if x > threshold}

    def vehicle_distribution(self, vehicle_id: int) -> List[Tuple[int, float]]:
        """Return [(trip id, x_tv)] for one vehicle, ascending trip id."""
        return sorted(
            (tid, x) for (tid, vid), x in self.values.items() if vid == vehicle_id
        )

    def check(self, catalog: TripCatalog, tol: float = ROW_TOLERANCE) -> List[str]:
        """
        Check the equality-form row sums and value bounds.

        Args:
            catalog: Catalog the solution is indexed against
            tol: Allowed deviation

        Returns:
            Human-readable violations (empty when valid)
        """
        problems = []
        request_sums = {r: 0.0 for r in catalog.request_ids}
        vehicle_sums = {v: 0.0 for v in catalog.vehicle_ids}
        for (tid, vid), x in sorted(self.values.items()):
            if x < -tol or x > 1 + tol:
                problems.append(f"x[{tid},{vid}]={x} outside [0, 1]")
            if not catalog.admissible(tid, vid):
                problems.append(f"x[{tid},{vid}] is not an admissible pair")
                continue
            vehicle_sums[vid] = vehicle_sums.get(vid, 0.0) + x
            for r in catalog.trips[tid]:
                request_sums[r] = request_sums.get(r, 0.0) + x
        for r, total in sorted(request_sums.items()):
            if abs(total - 1.0) > tol:
                problems.append(f"request {r} row sums to {total}")
        for v, total in sorted(vehicle_sums.items()):
            if abs(total - 1.0) > tol:
                problems.append(f"vehicle {v} row sums to {total}")
        return problems


@dataclass(frozen=True)
class Assignment:
    """One trip per vehicle, the total cost, and the requests nobody covers."""

    by_vehicle: Mapping[int, int]
    cost: float
    unassigned: FrozenSet[int] = frozenset()

    def trip_of(self, vehicle_id: int) -> int:
        return self.by_vehicle.get(vehicle_id, 0)

    def covering_vehicle(self, catalog: TripCatalog) -> Dict[int, int]:
        """Map each covered request id to the vehicle whose trip contains it."""
        cover = {}
        for vid, tid in sorted(self.by_vehicle.items()):
            for r in catalog.trips[tid]:
                cover[r] = vid
        return cover


@dataclass(frozen=True)
class DualSolution:
    """
    Dual multipliers y_r (requests) and z_v (vehicles) of the LP.

    z_v is bounded below by -c_0v, the empty-trip dual constraint; it is
    non-negative whenever the vehicle's empty trip costs nothing.
    """

    y: Mapping[int, float]
    z: Mapping[int, float]
    objective: float

    @classmethod
    def from_multipliers(
        cls, y: Mapping[int, float], z: Mapping[int, float]
    ) -> "DualSolution":
        objective = math.fsum(y.values()) - math.fsum(z.values())
        return cls(y=dict(y), z=dict(z), objective=objective)

    def profit(self, trip: Trip) -> float:
        return math.fsum(self.y.get(r, 0.0) for r in trip)

    def reduced_cost(self, trip: Trip, vehicle_id: int, cost: float) -> float:
        """c_tv - sum_{r in t} y_r + z_v."""
        return cost - self.profit(trip) + self.z.get(vehicle_id, 0.0)

    def violations(
        self, catalog: TripCatalog, tol: float = ROW_TOLERANCE
    ) -> List[Tuple[int, int, float]]:
        """
        Admissible pairs whose dual constraint is violated by more than tol.

        Returns:
            [(trip id, vehicle id, amount)] where amount = -reduced cost
        """
        found = []
        for vid, tid, cost in catalog.pairs():
            rc = self.reduced_cost(catalog.trips[tid], vid, cost)
            if rc < -tol:
                found.append((tid, vid, -rc))
        return found


def validate_catalog(catalog: TripCatalog) -> List[CatalogViolation]:
    """
    Check downward closure, cost monotonicity and empty-trip membership.

    Args:
        catalog: Catalog to check

    Returns:
        One CatalogViolation per failing (trip, vehicle, request); empty if valid
    """
    report = []
    for vid in catalog.vehicle_ids:
        costs = catalog.per_vehicle[vid]
        if 0 not in costs:
            report.append(CatalogViolation("empty-trip", 0, vid))
        for tid, cost in costs.items():
            trip = catalog.trips[tid]
            for r in trip:
                sub_id = catalog.trip_id(trip.without(r))
                if sub_id is None or sub_id not in costs:
                    report.append(
                        CatalogViolation(
                            "closure", tid, vid, r, f"{trip.without(r)} missing"
                        )
                    )
                elif costs[sub_id] > cost + MONOTONICITY_TOLERANCE:
                    report.append(
                        CatalogViolation(
                            "monotonicity",
                            tid,
                            vid,
                            r,
                            f"c[{sub_id}]={costs[sub_id]} > c[{tid}]={cost}",
                        )
                    )
    if report:
        logger.debug(f"Catalog validation found {len(report)} violations")
    return report


def assignment_cost(assignment: Assignment, catalog: TripCatalog) -> float:
    """
    Total cost sum_v c_{t(v), v} of an assignment.

    Raises:
        InadmissiblePairError: If some (t(v), v) is not admissible
    """
    return math.fsum(
        catalog.cost(tid, vid) for vid, tid in sorted(assignment.by_vehicle.items())
    )


def build_assignment(choices: Mapping[int, int], catalog: TripCatalog) -> Assignment:
    """
    Assemble an Assignment from per-vehicle trip choices.

    Vehicles missing from choices take the empty trip.

    Args:
        choices: vehicle id -> trip id
        catalog: Catalog the ids refer to

    Returns:
        Assignment with recomputed cost and unassigned requests

    Raises:
        InadmissiblePairError: If a chosen pair is not admissible
        ValidationError: If a request is covered by two chosen trips
    """
    by_vehicle = {vid: int(choices.get(vid, 0)) for vid in catalog.vehicle_ids}
    covered: Dict[int, int] = {}
    for vid, tid in by_vehicle.items():
        if not catalog.admissible(tid, vid):
            raise InadmissiblePairError(tid, vid)
        for r in catalog.trips[tid]:
            if r in covered:
                raise ValidationError(
                    f"request {r} covered by vehicles {covered[r]} and {vid}"
                )
            covered[r] = vid
    assignment = Assignment(by_vehicle=by_vehicle, cost=0.0)
    cost = assignment_cost(assignment, catalog)
    unassigned = frozenset(r for r in catalog.request_ids if r not in covered)
    return Assignment(by_vehicle=by_vehicle, cost=cost, unassigned=unassigned)


def is_exact_cover(assignment: Assignment, catalog: TripCatalog) -> bool:
    """
    Check the set-partitioning view of an assignment.

    The chosen sets t(v) + {v} must partition the ground set R + V.
    """
    ground = {("r", r) for r in catalog.request_ids} | {
        ("v", v) for v in catalog.vehicle_ids
    }
    chosen = [
        {("r", r) for r in catalog.trips[tid]} | {("v", vid)}
        for vid, tid in assignment.by_vehicle.items()
    ]
    union = set().union(*chosen) if chosen else set()
    return union == ground and sum(len(s) for s in chosen) == len(ground)


# -- file formats ---------------------------------------------------------


def _request_from_json(data: Any, i: int, qos: QoS, synthetic: bool) -> Request:
    where = f"requests[{i}]"
    validate_object(data, where, ["id", "origin", "destination"])
    request = Request(
        id=validate_int(data["id"], f"{where}.id", minimum=0),
        origin=validate_point(data["origin"], f"{where}.origin"),
        destination=validate_point(data["destination"], f"{where}.destination"),
        request_time=validate_number(
            data.get("request_time", 0.0), f"{where}.request_time"
        ),
        max_wait=validate_non_negative(
            data.get("max_wait", qos.max_wait), f"{where}.max_wait"
        ),
        max_delay=validate_non_negative(
            data.get("max_delay", qos.max_delay), f"{where}.max_delay"
        ),
        penalty=validate_non_negative(data.get("penalty", 0.0), f"{where}.penalty"),
    )
    if not synthetic and request.origin == request.destination:
        raise ValidationError(f"{where}.destination must differ from origin")
    return request


def _vehicle_from_json(data: Any, i: int) -> Vehicle:
    where = f"vehicles[{i}]"
    validate_object(data, where, ["id", "position"])
    available_time = validate_number(
        data.get("available_time", 0.0), f"{where}.available_time"
    )
    capacity = validate_int(data.get("capacity", 1), f"{where}.capacity", minimum=1)
    onboard = []
    for j, passenger in enumerate(data.get("onboard", [])):
        pw = f"{where}.onboard[{j}]"
        validate_object(passenger, pw, ["destination", "latest_dropoff"])
        latest = validate_number(passenger["latest_dropoff"], f"{pw}.latest_dropoff")
        if latest < available_time:
            raise ValidationError(
                f"{pw}.latest_dropoff must be >= available_time, got {latest}"
            )
        request_id = passenger.get("request_id")
        onboard.append(
            OnboardPassenger(
                destination=validate_point(
                    passenger["destination"], f"{pw}.destination"
                ),
                latest_dropoff=latest,
                request_id=(
                    None
                    if request_id is None
                    else validate_int(request_id, f"{pw}.request_id", minimum=0)
                ),
            )
        )
    if len(onboard) > capacity:
        raise ValidationError(
            f"{where}.onboard has {len(onboard)} passengers, capacity is {capacity}"
        )
    dummy_for = data.get("dummy_for")
    return Vehicle(
        id=validate_int(data["id"], f"{where}.id", minimum=0),
        position=validate_point(data["position"], f"{where}.position"),
        available_time=available_time,
        capacity=capacity,
        onboard=tuple(onboard),
        dummy_for=(
            None
            if dummy_for is None
            else validate_int(dummy_for, f"{where}.dummy_for", minimum=0)
        ),
    )


def _metric_from_json(data: Any) -> Metric:
    if data == "euclidean":
        return EuclideanMetric()
    validate_object(data, "metric", ["matrix", "points"])
    points, matrix = validate_metric_matrix(data["matrix"], data["points"])
    return MatrixMetric(points, matrix)


def instance_from_dict(data: Any) -> Instance:
    """
    Build and validate an Instance from its JSON object.

    Raises:
        ValidationError: Naming the first failing field
    """
    validate_object(data, "instance", ["requests", "vehicles"])
    qos_data = data.get("qos", {})
    validate_object(qos_data, "qos", [])
    qos = QoS(
        max_wait=validate_non_negative(
            qos_data.get("max_wait", QoS.max_wait), "qos.max_wait"
        ),
        max_delay=validate_non_negative(
            qos_data.get("max_delay", QoS.max_delay), "qos.max_delay"
        ),
    )
    synthetic = bool(data.get("synthetic", False))
    requests = [
        _request_from_json(r, i, qos, synthetic) for i, r in enumerate(data["requests"])
    ]
    vehicles = [_vehicle_from_json(v, i) for i, v in enumerate(data["vehicles"])]
    validate_unique_ids([r.id for r in requests], "requests")
    validate_unique_ids([v.id for v in vehicles], "vehicles")
    metric = _metric_from_json(data.get("metric", "euclidean"))
    if isinstance(metric, MatrixMetric):
        for r in requests:
            metric.index_of(r.origin)
            metric.index_of(r.destination)
        for v in vehicles:
            metric.index_of(v.position)
            for p in v.onboard:
                metric.index_of(p.destination)
    return Instance(
        requests=tuple(requests),
        vehicles=tuple(vehicles),
        metric=metric,
        speed=validate_positive(data.get("speed", 0.01), "speed"),
        qos=qos,
        synthetic=synthetic,
    )


def instance_to_dict(instance: Instance) -> Dict[str, Any]:
    """Serialize an Instance to its JSON object (catalog excluded)."""
    vehicles = []
    for v in instance.vehicles:
        item: Dict[str, Any] = {
            "id": v.id,
            "position": list(v.position),
            "available_time": v.available_time,
            "capacity": v.capacity,
            "onboard": [
                {
                    "destination": list(p.destination),
                    "latest_dropoff": p.latest_dropoff,
                    **({} if p.request_id is None else {"request_id": p.request_id}),
                }
                for p in v.onboard
            ],
        }
        if v.dummy_for is not None:
            item["dummy_for"] = v.dummy_for
        vehicles.append(item)
    data = {
        "requests": [
            {
                "id": r.id,
                "origin": list(r.origin),
                "destination": list(r.destination),
                "request_time": r.request_time,
                "max_wait": r.max_wait,
                "max_delay": r.max_delay,
                "penalty": r.penalty,
            }
            for r in instance.requests
        ],
        "vehicles": vehicles,
        "metric": instance.metric.to_json(),
        "speed": instance.speed,
        "qos": {"max_wait": instance.qos.max_wait, "max_delay": instance.qos.max_delay},
    }
    if instance.synthetic:
        data["synthetic"] = True
    return data


def load_instance(path: Union[str, Path]) -> Instance:
    """
    Load and validate an instance file.

    Args:
        path: Instance JSON file

    Returns:
        Validated Instance

    Raises:
        ValidationError: On malformed JSON or a failed invariant
        OSError: If the file cannot be read
    """
    instance = instance_from_dict(read_json(path))
    logger.info(
        f"Loaded instance '{path}' with {len(instance.requests)} requests "
        f"and {len(instance.vehicles)} vehicles"
    )
    return instance


def save_instance(instance: Instance, path: Union[str, Path]) -> None:
    """Write an instance file in canonical form."""
    write_json(instance_to_dict(instance), path)


def catalog_to_dict(catalog: TripCatalog) -> Dict[str, Any]:
    """Serialize a catalog: trips as request-id arrays, costs per vehicle."""
    data: Dict[str, Any] = {
        "trips": [list(t.requests) for t in catalog.trips],
        "per_vehicle": {
            str(vid): [{"trip": tid, "cost": cost} for tid, cost in costs.items()]
            for vid, costs in catalog.per_vehicle.items()
        },
        "request_ids": list(catalog.request_ids),
    }
    if catalog.truncated_at is not None:
        data["truncated_at"] = catalog.truncated_at
    return data


def catalog_from_dict(data: Any) -> TripCatalog:
    """
    Parse a catalog JSON object.

    Raises:
        ValidationError: If the structure is malformed
    """
    validate_object(data, "catalog", ["trips", "per_vehicle"])
    trips = tuple(Trip(tuple(t)) for t in data["trips"])
    per_vehicle = {}
    for key, entries in data["per_vehicle"].items():
        vid = int(key)
        costs = {}
        for j, entry in enumerate(entries):
            where = f"per_vehicle[{key}][{j}]"
            validate_object(entry, where, ["trip", "cost"])
            tid = validate_int(entry["trip"], f"{where}.trip", minimum=0)
            if tid >= len(trips):
                raise ValidationError(f"{where}.trip {tid} out of range")
            costs[tid] = validate_number(entry["cost"], f"{where}.cost")
        per_vehicle[vid] = dict(sorted(costs.items()))
    request_ids = data.get("request_ids")
    if request_ids is None:
        request_ids = sorted({r for t in trips for r in t})
    return TripCatalog(
        trips=trips,
        per_vehicle=dict(sorted(per_vehicle.items())),
        request_ids=tuple(sorted(request_ids)),
        truncated_at=data.get("truncated_at"),
    )


def save_catalog(catalog: TripCatalog, path: Union[str, Path]) -> None:
    write_json(catalog_to_dict(catalog), path)


def load_catalog(path: Union[str, Path]) -> TripCatalog:
    catalog = catalog_from_dict(read_json(path))
    logger.info(f"Loaded catalog '{path}' with {len(catalog.trips)} trips")
    return catalog


def assignment_to_dict(assignment: Assignment, catalog: TripCatalog) -> Dict[str, Any]:
    """Solution file: vehicle id -> request ids, cost, unassigned requests."""
    return {
        "by_vehicle": {
            str(vid): list(catalog.trips[tid].requests)
            for vid, tid in sorted(assignment.by_vehicle.items())
        },
        "cost": assignment.cost,
        "unassigned": sorted(assignment.unassigned),
    }


def assignment_from_dict(data: Any, catalog: TripCatalog) -> Assignment:
    """
    Parse a solution file against a catalog.

    Raises:
        ValidationError: If a trip is unknown or the cost disagrees with the catalog
    """
    validate_object(data, "solution", ["by_vehicle"])
    choices = {}
    for key, requests in data["by_vehicle"].items():
        tid = catalog.trip_id(Trip(tuple(requests)))
        if tid is None:
            raise ValidationError(f"solution trip {requests} is not in the catalog")
        choices[int(key)] = tid
    assignment = build_assignment(choices, catalog)
    stored = data.get("cost")
    if stored is not None and abs(float(stored) - assignment.cost) > 1e-6 * (
        1 + abs(assignment.cost)
    ):
        raise ValidationError(
            f"solution cost {stored} disagrees with catalog cost {assignment.cost}"
        )
    return assignment


def fractional_to_dict(x: FractionalSolution, catalog: TripCatalog) -> Dict[str, Any]:
    """Fractional solution file keyed by request arrays so it survives re-generation."""
    return {
        "objective": x.objective,
        "values": [
            {"vehicle": vid, "trip": list(catalog.trips[tid].requests), "value": value}
            for (tid, vid), value in sorted(
                x.values.items(), key=lambda item: (item[0][1], item[0][0])
            )
        ],
    }


def fractional_from_dict(data: Any, catalog: TripCatalog) -> FractionalSolution:
    """
    Parse a fractional solution file against a catalog.

    Raises:
        ValidationError: If a (trip, vehicle) entry is not in the catalog
    """
    validate_object(data, "fractional solution", ["values"])
    values = {}
    for i, entry in enumerate(data["values"]):
        where = f"values[{i}]"
        validate_object(entry, where, ["vehicle", "trip", "value"])
        tid = catalog.trip_id(Trip(tuple(entry["trip"])))
        vid = validate_int(entry["vehicle"], f"{where}.vehicle", minimum=0)
        if tid is None or not catalog.admissible(tid, vid):
            raise ValidationError(
                f"{where}: trip {entry['trip']} is not admissible for vehicle {vid}"
            )
        values[(tid, vid)] = validate_number(entry["value"], f"{where}.value")
    objective = data.get("objective")
    if objective is None:
        objective = math.fsum(catalog.cost(t, v) * x for (t, v), x in values.items())
    return FractionalSolution(values=values, objective=float(objective))
