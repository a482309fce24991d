"""
Instance constructors: the two analytic families with explicit unit-cost
catalogs, and seeded uniform random instances.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, List, Optional

from model import (
    CatalogBuilder,
    FractionalSolution,
    Instance,
    QoS,
    Request,
    Trip,
    TripCatalog,
    Vehicle,
)
from utils import get_logger, make_rng, round_float
from validators import (
    validate_int,
    validate_non_negative,
    validate_positive,
    validate_seed,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class FamilyInstance:
    instance: Instance
    catalog: TripCatalog
    solution: Optional[FractionalSolution] = None


@dataclass(frozen=True)
class RandomInstanceParams:
    """Parameters of a uniform random instance over a square region (km)."""

    n_requests: int = 6
    n_vehicles: int = 3
    capacity: int = 2
    region_km: float = 5.0
    qos: QoS = QoS()
    speed: float = 0.01
    seed: int = 0

    def __post_init__(self):
        validate_int(self.n_requests, "n_requests", minimum=0)
        validate_int(self.n_vehicles, "n_vehicles", minimum=0)
        validate_int(self.capacity, "capacity", minimum=1)
        validate_positive(self.region_km, "region_km")
        validate_non_negative(self.qos.max_wait, "qos.max_wait")
        validate_non_negative(self.qos.max_delay, "qos.max_delay")
        validate_positive(self.speed, "speed")
        validate_seed(self.seed)


def _subsets(ground: List[int], k: int) -> List[Trip]:
    # Non-empty subsets of size <= k, by size then lexicographically.
    return [Trip(c) for size in range(1, k + 1) for c in combinations(ground, size)]


def _unit_catalog(
    requests: List[int],
    vehicles: List[int],
    k: int,
    admits: Callable[[int, Trip], bool],
) -> TripCatalog:
    builder = CatalogBuilder(requests)
    subsets = _subsets(requests, k)
    for trip in subsets:
        builder.add_trip(trip)
    for vid in vehicles:
        builder.set_cost(Trip(), vid, 0.0)
        for trip in subsets:
            if admits(vid, trip):
                builder.set_cost(trip, vid, 1.0)
    return builder.build()


def _abstract_instance(
    n_requests: int, n_vehicles: int, capacity: int, catalog: TripCatalog
) -> Instance:
    origin = (0.0, 0.0)
    return Instance(
        requests=tuple(Request(r, origin, origin) for r in range(n_requests)),
        vehicles=tuple(
            Vehicle(v, origin, capacity=capacity) for v in range(n_vehicles)
        ),
        trips=catalog,
        synthetic=True,
    )


def gen_gap_family(k: int) -> FamilyInstance:
    """
    Two vehicles of capacity k and k + 1 requests; every trip of size <= k
    costs 1 on either vehicle. LP optimum (k + 1) / k, ILP optimum 2.

    Raises:
        ValidationError: If k < 2
    """
    validate_int(k, "k", minimum=2)
    requests = list(range(k + 1))
    catalog = _unit_catalog(requests, [0, 1], k, lambda vid, trip: True)
    logger.info(f"Generated integrality-gap instance k={k}")
    return FamilyInstance(_abstract_instance(k + 1, 2, k, catalog), catalog)


def gen_tightness_family(k: int) -> FamilyInstance:
    """
    k + 1 vehicles and k + 1 requests; vehicle i admits the subsets of
    R minus {i} at unit cost.

    The returned solution puts 1/k on each vehicle's k-request trip and
    (k - 1)/k on its empty trip, objective (k + 1) / k.

    Raises:
        ValidationError: If k < 2
    """
    validate_int(k, "k", minimum=2)
    requests = list(range(k + 1))
    catalog = _unit_catalog(requests, requests, k, lambda vid, trip: vid not in trip)
    values = {}
    for vid in requests:
        full = catalog.trip_id(Trip(tuple(r for r in requests if r != vid)))
        values[(full, vid)] = 1.0 / k
        values[(0, vid)] = (k - 1) / k
    solution = FractionalSolution(values=values, objective=(k + 1) / k)
    logger.info(f"Generated tightness instance k={k}")
    return FamilyInstance(
        _abstract_instance(k + 1, k + 1, k, catalog), catalog, solution
    )


def gen_random(params: RandomInstanceParams) -> Instance:
    """
    Uniform random instance: points in [0, region_km]^2, request times 0,
    vehicles idle at time 0. Coordinates are rounded to the file precision
    so the instance survives a save/load cycle unchanged.

    Args:
        params: Validated RandomInstanceParams

    Returns:
        Instance, identical for identical params
    """
    rng = make_rng(params.seed)
    size = params.region_km

    def point():
        x, y = rng.uniform(0.0, size, 2)
        return (round_float(float(x)), round_float(float(y)))

    requests = []
    for r in range(params.n_requests):
        origin = point()
        destination = point()
        requests.append(
            Request(
                id=r,
                origin=origin,
                destination=destination,
                max_wait=params.qos.max_wait,
                max_delay=params.qos.max_delay,
            )
        )
    vehicles = [
        Vehicle(id=v, position=point(), capacity=params.capacity)
        for v in range(params.n_vehicles)
    ]
    logger.debug(
        f"Generated random instance seed={params.seed} with "
        f"{params.n_requests} requests and {params.n_vehicles} vehicles"
    )
    return Instance(
        requests=tuple(requests),
        vehicles=tuple(vehicles),
        speed=params.speed,
        qos=params.qos,
    )
