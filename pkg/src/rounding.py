"""
Rounding procedures that turn a fractional LP solution into assignments.

- round_independent: every x_tv drawn as its own Bernoulli; the raw choice
  may give a vehicle several trips or none and is returned uncorrected.
- round_dependent: one trip per vehicle drawn from the vehicle's
  distribution {x_tv}_t, followed by multiplicity_correction.
- round_deterministic: the largest x_tv per vehicle, followed by
  multiplicity_correction.

run_trials repeats a procedure with seeds base_seed + i and collects the
statistics the rounding guarantees are checked against.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from model import (
    ROW_TOLERANCE,
    Assignment,
    FractionalSolution,
    TripCatalog,
    build_assignment,
)
from utils import RNG_ALGORITHM, binomial_sigma, get_logger, make_rng, mean_sigma
from validators import ValidationError

logger = get_logger(__name__)

# Over-assignment levels whose tail probabilities are reported.
TAIL_DELTAS = (1, 2, 3)


class RoundingMethod(str, Enum):
    DEPENDENT = "rand"
    DETERMINISTIC = "det"
    INDEPENDENT = "indep"


class ClosureError(RuntimeError):
    """A reduced trip t \\ {r} is missing from the vehicle's catalog entries."""

    pass


@dataclass(frozen=True)
class PairCovariance:
    vehicle_id: int
    trip_a: int
    trip_b: int
    covariance: float
    expected: float
    sigma: float


@dataclass(frozen=True)
class RoundingTrialStats:
    """
    Monte-Carlo statistics of a rounding procedure.

    overassignment_histogram maps request -> {delta: frequency} where
    delta = Y - 1 and Y counts the pre-correction chosen trips containing the
    request (delta = -1 means uncovered). overassignment_tail maps
    request -> {delta: Pr[Y >= 1 + delta]}.
    """

    method: str
    trials: int
    base_seed: int
    mean_cost: float
    cost_sigma: float
    unassigned_fraction_mean: float
    unassigned_fraction_sigma: float
    per_request_unassigned_frequency: Dict[int, float]
    overassignment_histogram: Dict[int, Dict[int, float]]
    overassignment_tail: Dict[int, Dict[int, float]]
    indicator_means: Dict[Tuple[int, int], float]
    pair_covariances: Tuple[PairCovariance, ...] = ()
    vehicle_violation_frequency: Optional[float] = None


@dataclass
class _TrialOutcome:
    cost: float
    unassigned: np.ndarray
    coverage: np.ndarray
    indicators: np.ndarray
    violation: bool = False


def chernoff_bound(delta: float) -> float:
    """Upper tail bound e^delta / (1 + delta)^(1 + delta) for a unit-mean sum."""
    return math.exp(delta) / (1.0 + delta) ** (1.0 + delta)


def _support_keys(x: FractionalSolution) -> List[Tuple[int, int]]:
    # (trip id, vehicle id) keys ordered by vehicle then trip.
    return sorted(x.values, key=lambda key: (key[1], key[0]))


def round_independent(x: FractionalSolution, seed: int) -> Tuple[Tuple[int, int], ...]:
    """
    Draw every indicator X_tv independently with probability x_tv.

    Args:
        x: Fractional solution
        seed: 64-bit seed

    Returns:
        Chosen (trip id, vehicle id) pairs ordered by vehicle then trip; a
        vehicle may appear zero or several times
    """
    keys = _support_keys(x)
    draws = make_rng(seed).random(len(keys))
    return tuple(key for key, u in zip(keys, draws) if u < x.values[key])


def _vehicle_distributions(
    x: FractionalSolution, catalog: TripCatalog
) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    distributions = {}
    for vid in catalog.vehicle_ids:
        entries = x.vehicle_distribution(vid)
        trips = np.array([tid for tid, _ in entries], dtype=int)
        probs = np.array([max(p, 0.0) for _, p in entries], dtype=float)
        total = float(probs.sum())
        if abs(total - 1.0) > ROW_TOLERANCE:
            raise ValidationError(
                f"vehicle {vid} fractional values sum to {total}, expected 1"
            )
        distributions[vid] = (trips, np.cumsum(probs) / total)
    return distributions


def _sample_dependent(
    distributions: Mapping[int, Tuple[np.ndarray, np.ndarray]], seed: int
) -> Dict[int, int]:
    # One uniform per vehicle in id order, inverse CDF over trips sorted by id.
    vehicles = sorted(distributions)
    draws = make_rng(seed).random(len(vehicles))
    choice = {}
    for vid, u in zip(vehicles, draws):
        trips, cdf = distributions[vid]
        k = min(int(np.searchsorted(cdf, u, side="right")), len(trips) - 1)
        choice[vid] = int(trips[k])
    return choice


def multiplicity_correction(raw: Mapping[int, int], catalog: TripCatalog) -> Assignment:
    """
    Resolve requests covered by several chosen trips.

    Requests are processed in ascending id. Each multiply-covered request is
    kept in the trip whose competitors save the most by dropping it (ties to
    the lowest vehicle id); every other holder switches to its reduced trip
    t minus {r}, for the same vehicle.

    Args:
        raw: vehicle id -> chosen trip id (every pair admissible)
        catalog: Downward-closed catalog

    Returns:
        Valid Assignment whose cost never exceeds the raw cost

    Raises:
        ClosureError: If a reduced trip is not admissible for its vehicle
    """
    choice = {vid: raw.get(vid, 0) for vid in catalog.vehicle_ids}
    counts: Dict[int, int] = {}
    for tid in choice.values():
        for r in catalog.trips[tid]:
            counts[r] = counts.get(r, 0) + 1

    def reduced(vid: int, r: int) -> int:
        trip = catalog.trips[choice[vid]].without(r)
        sub = catalog.trip_id(trip)
        if sub is None or not catalog.admissible(sub, vid):
            raise ClosureError(
                f"trip {list(trip.requests)} missing for vehicle {vid} "
                f"while removing request {r}"
            )
        return sub

    for r in sorted(q for q, n in counts.items() if n > 1):
        holders = [vid for vid in sorted(choice) if r in catalog.trips[choice[vid]]]
        if len(holders) <= 1:
            continue
        savings = {}
        for vid in holders:
            current = catalog.cost(choice[vid], vid)
            savings[vid] = current - catalog.cost(reduced(vid, r), vid)
        keep, best = None, -math.inf
        for vid in holders:
            saving = math.fsum(savings[w] for w in holders if w != vid)
            if saving > best + 1e-12:
                keep, best = vid, saving
        for vid in holders:
            if vid != keep:
                choice[vid] = reduced(vid, r)

    return build_assignment(choice, catalog)


def round_dependent(
    x: FractionalSolution, catalog: TripCatalog, seed: int
) -> Assignment:
    """
    Sample one trip per vehicle from its distribution, then correct multiplicities.

    Args:
        x: Fractional solution whose vehicle rows sum to 1
        catalog: Catalog x is indexed against
        seed: 64-bit seed

    Returns:
        Valid Assignment

    Raises:
        ValidationError: If a vehicle's values deviate from 1 by more than 1e-6
    """
    raw = _sample_dependent(_vehicle_distributions(x, catalog), seed)
    return multiplicity_correction(raw, catalog)


def _argmax_choice(x: FractionalSolution, catalog: TripCatalog) -> Dict[int, int]:
    choice = {}
    for vid in catalog.vehicle_ids:
        entries = x.vehicle_distribution(vid)
        best_tid, best = 0, -math.inf
        for tid, value in entries:
            if value > best:
                best_tid, best = tid, value
        choice[vid] = best_tid
    return choice


def round_deterministic(x: FractionalSolution, catalog: TripCatalog) -> Assignment:
    """Assign each vehicle its largest x_tv (lowest trip id on ties), then correct."""
    return multiplicity_correction(_argmax_choice(x, catalog), catalog)


def _outcome(
    chosen: Sequence[Tuple[int, int]],
    corrected: Optional[Assignment],
    catalog: TripCatalog,
    request_index: Mapping[int, int],
    pair_index: Mapping[Tuple[int, int], int],
) -> _TrialOutcome:
    coverage = np.zeros(len(request_index), dtype=np.int64)
    indicators = np.zeros(len(pair_index), dtype=np.int8)
    per_vehicle: Dict[int, int] = {vid: 0 for vid in catalog.vehicle_ids}
    for tid, vid in chosen:
        per_vehicle[vid] = per_vehicle.get(vid, 0) + 1
        for r in catalog.trips[tid]:
            coverage[request_index[r]] += 1
        if (tid, vid) in pair_index:
            indicators[pair_index[(tid, vid)]] = 1
    if corrected is None:
        cost = math.fsum(catalog.cost(tid, vid) for tid, vid in chosen)
        unassigned = coverage == 0
        violation = any(n != 1 for n in per_vehicle.values())
    else:
        cost = corrected.cost
        unassigned = np.zeros(len(request_index), dtype=bool)
        for r in corrected.unassigned:
            unassigned[request_index[r]] = True
        violation = False
    return _TrialOutcome(cost, unassigned, coverage, indicators, violation)


def run_trials(
    x: FractionalSolution,
    catalog: TripCatalog,
    method: RoundingMethod,
    trials: int,
    base_seed: int = 0,
    jobs: int = 1,
) -> RoundingTrialStats:
    """
    Repeat a rounding procedure and aggregate its statistics.

    Trial i uses seed base_seed + i. Results are reduced in trial order, so
    the statistics do not depend on jobs.

    Args:
        x: Fractional solution
        catalog: Catalog x is indexed against
        method: Rounding procedure
        trials: Number of trials, at least 1
        base_seed: Seed of trial 0
        jobs: Worker threads

    Returns:
        RoundingTrialStats

    Raises:
        ValidationError: If trials < 1 or x fails the per-vehicle sum check
    """
    method = RoundingMethod(method)
    if trials < 1:
        raise ValidationError(f"trials must be at least 1, got {trials}")

    requests = list(catalog.request_ids)
    request_index = {r: i for i, r in enumerate(requests)}
    keys = [k for k in _support_keys(x) if x.values[k] > 0]
    pair_index = {k: i for i, k in enumerate(keys)}
    distributions = None
    if method != RoundingMethod.INDEPENDENT:
        distributions = _vehicle_distributions(x, catalog)

    logger.info(
        f"Running {trials} {method.value} rounding trials from seed {base_seed} "
        f"over {len(keys)} supported pairs"
    )

    def trial(i: int) -> _TrialOutcome:
        seed = base_seed + i
        if method == RoundingMethod.INDEPENDENT:
            chosen = round_independent(x, seed)
            return _outcome(chosen, None, catalog, request_index, pair_index)
        if method == RoundingMethod.DEPENDENT:
            raw = _sample_dependent(distributions, seed)
        else:
            raw = _argmax_choice(x, catalog)
        corrected = multiplicity_correction(raw, catalog)
        chosen = [(tid, vid) for vid, tid in sorted(raw.items())]
        return _outcome(chosen, corrected, catalog, request_index, pair_index)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(trial, range(trials)))
    else:
        outcomes = [trial(i) for i in range(trials)]

    return _aggregate(outcomes, method, trials, base_seed, requests, keys, x)


def _aggregate(
    outcomes: List[_TrialOutcome],
    method: RoundingMethod,
    trials: int,
    base_seed: int,
    requests: List[int],
    keys: List[Tuple[int, int]],
    x: FractionalSolution,
) -> RoundingTrialStats:
    costs = np.array([o.cost for o in outcomes])
    unassigned = np.array([o.unassigned for o in outcomes]).reshape(
        trials, len(requests)
    )
    coverage = np.array([o.coverage for o in outcomes]).reshape(trials, len(requests))
    indicators = np.array([o.indicators for o in outcomes]).reshape(trials, len(keys))

    per_request = unassigned.mean(axis=0) if requests else np.zeros(0)
    fractions = unassigned.mean(axis=1) if requests else np.zeros(trials)

    histogram: Dict[int, Dict[int, float]] = {}
    tails: Dict[int, Dict[int, float]] = {}
    for i, r in enumerate(requests):
        values, counts = np.unique(coverage[:, i], return_counts=True)
        histogram[r] = {int(v) - 1: float(c) / trials for v, c in zip(values, counts)}
        tails[r] = {d: float((coverage[:, i] >= 1 + d).mean()) for d in TAIL_DELTAS}

    means = indicators.mean(axis=0) if keys else np.zeros(0)
    covariances = []
    by_vehicle: Dict[int, List[int]] = {}
    for j, (tid, vid) in enumerate(keys):
        by_vehicle.setdefault(vid, []).append(j)
    for vid, cols in sorted(by_vehicle.items()):
        for a_pos, a in enumerate(cols):
            for b in cols[a_pos + 1 :]:
                product = indicators[:, a].astype(float) * indicators[:, b]
                cov = float(product.mean() - means[a] * means[b])
                # Var of the product-moment estimator, plug-in form.
                centered = (indicators[:, a] - means[a]) * (indicators[:, b] - means[b])
                sigma = mean_sigma(centered) if trials > 1 else 0.0
                covariances.append(
                    PairCovariance(
                        vehicle_id=vid,
                        trip_a=keys[a][0],
                        trip_b=keys[b][0],
                        covariance=cov,
                        expected=-x.values[keys[a]] * x.values[keys[b]],
                        sigma=sigma,
                    )
                )

    violation = None
    if method == RoundingMethod.INDEPENDENT:
        violation = float(np.mean([o.violation for o in outcomes]))

    stats = RoundingTrialStats(
        method=method.value,
        trials=trials,
        base_seed=base_seed,
        mean_cost=float(costs.mean()),
        cost_sigma=mean_sigma(costs),
        unassigned_fraction_mean=float(fractions.mean()),
        unassigned_fraction_sigma=mean_sigma(fractions),
        per_request_unassigned_frequency={
            r: float(per_request[i]) for i, r in enumerate(requests)
        },
        overassignment_histogram=histogram,
        overassignment_tail=tails,
        indicator_means={k: float(means[j]) for j, k in enumerate(keys)},
        pair_covariances=tuple(covariances),
        vehicle_violation_frequency=violation,
    )
    logger.info(
        f"Rounding {method.value}: mean cost {stats.mean_cost:.6g}, "
        f"unassigned fraction {stats.unassigned_fraction_mean:.4f}"
    )
    return stats


def stats_to_dict(stats: RoundingTrialStats, catalog: TripCatalog) -> Dict[str, Any]:
    """
    JSON form of trial statistics, seeds and generator identifier included.

    Pairs are keyed "vehicle:request,request" with the trip's request ids.
    """

    def pair_key(tid: int, vid: int) -> str:
        return f"{vid}:{','.join(str(r) for r in catalog.trips[tid])}"

    per_request = stats.per_request_unassigned_frequency
    return {
        "method": stats.method,
        "trials": stats.trials,
        "seeds": {
            "base_seed": stats.base_seed,
            "count": stats.trials,
            "rule": "base_seed + trial",
            "rng": RNG_ALGORITHM,
        },
        "mean_cost": stats.mean_cost,
        "cost_sigma": stats.cost_sigma,
        "unassigned_fraction_mean": stats.unassigned_fraction_mean,
        "unassigned_fraction_sigma": stats.unassigned_fraction_sigma,
        "per_request_unassigned_frequency": {
            str(r): {"frequency": p, "sigma": binomial_sigma(p, stats.trials)}
            for r, p in per_request.items()
        },
        "overassignment_histogram": {
            str(r): {str(d): p for d, p in hist.items()}
            for r, hist in stats.overassignment_histogram.items()
        },
        "overassignment_tail": {
            str(r): {str(d): p for d, p in tail.items()}
            for r, tail in stats.overassignment_tail.items()
        },
        "chernoff_bounds": {str(d): chernoff_bound(d) for d in TAIL_DELTAS},
        "indicator_means": {
            pair_key(tid, vid): p for (tid, vid), p in stats.indicator_means.items()
        },
        "pair_covariances": [
            {
                "vehicle": c.vehicle_id,
                "trip_a": list(catalog.trips[c.trip_a].requests),
                "trip_b": list(catalog.trips[c.trip_b].requests),
                "covariance": c.covariance,
                "expected": c.expected,
                "sigma": c.sigma,
            }
            for c in stats.pair_covariances
        ],
        "vehicle_violation_frequency": stats.vehicle_violation_frequency,
    }
