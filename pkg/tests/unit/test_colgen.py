"""
Unit tests for colgen module.
"""

import csv
import sys
import os

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "../../src"))

from colgen import (
    LOG_COLUMNS,
    TripPool,
    price_vehicle,
    separate_dual,
    solve_lp_by_colgen,
    vehicle_trips,
)
from generators import RandomInstanceParams, gen_gap_family, gen_random
from lp import build_lp, solve_lp
from model import EMPTY_TRIP, DualSolution, Instance, Request, Trip, Vehicle
from tripgen import generate_catalog


def random_instance(seed):
    """Small random instance with every request reachable."""
    return gen_random(
        RandomInstanceParams(
            n_requests=4, n_vehicles=4, capacity=2, region_km=2.0, seed=seed
        )
    )


class TestPriceVehicle:
    """Tests for price_vehicle function."""

    def test_best_net_worth(self):
        """Test the trip maximizing sum y - c is returned."""
        trips = {EMPTY_TRIP: 0.0, Trip.of(0): 1.0, Trip.of(1): 1.0, Trip.of(0, 1): 1.5}
        vehicle = Vehicle(id=0, position=(0.0, 0.0), capacity=2)

        result = price_vehicle(vehicle, {0: 1.0, 1: 1.0}, None, trips=trips)

        assert result.trip == Trip.of(0, 1)
        assert result.value == pytest.approx(0.5)

    def test_ties_prefer_small_trips(self):
        """Test equal values resolve to the smaller trip."""
        trips = {EMPTY_TRIP: 0.0, Trip.of(0): 1.0, Trip.of(1): 1.0}
        vehicle = Vehicle(id=0, position=(0.0, 0.0))

        result = price_vehicle(vehicle, {0: 1.0, 1: 1.0}, None, trips=trips)

        assert result.trip == EMPTY_TRIP

    def test_farkas_ignores_costs(self):
        """Test Farkas pricing ranks by multipliers only."""
        trips = {EMPTY_TRIP: 0.0, Trip.of(0): 100.0}
        vehicle = Vehicle(id=0, position=(0.0, 0.0))

        result = price_vehicle(vehicle, {0: 1.0}, None, farkas=True, trips=trips)

        assert result.trip == Trip.of(0)
        assert result.value == 1.0

    def test_explicit_catalog(self):
        """Test candidate trips come from an explicit catalog when present."""
        family = gen_gap_family(2)
        vehicle = family.instance.vehicle(0)

        trips = vehicle_trips(vehicle, family.instance, max_trip_size=1)

        assert set(trips) == {EMPTY_TRIP, Trip.of(0), Trip.of(1), Trip.of(2)}


class TestSeparateDual:
    """Tests for separate_dual function."""

    def test_violated(self):
        """Test a dual overpaying a request is separated."""
        family = gen_gap_family(2)
        dual = DualSolution.from_multipliers({0: 2.0, 1: 0.0, 2: 0.0}, {0: 0.0, 1: 0.0})

        violation = separate_dual(dual, family.instance)

        assert violation.vehicle_id == 0
        assert violation.trip == Trip.of(0)
        assert violation.amount == pytest.approx(1.0)

    def test_feasible(self):
        """Test the LP dual of a full catalog is certified feasible."""
        instance = random_instance(0)
        pool = TripPool(instance)
        result = solve_lp(build_lp(generate_catalog(instance)))

        assert separate_dual(result.dual, instance, pool=pool) is None


class TestSolveLpByColgen:
    """Tests for solve_lp_by_colgen function."""

    @pytest.mark.parametrize("k", range(2, 6))
    def test_gap_family(self, k):
        """Test column generation reaches the full LP optimum."""
        family = gen_gap_family(k)

        result = solve_lp_by_colgen(family.instance)

        assert result.optimal
        assert result.objective == pytest.approx((k + 1) / k)
        assert result.primal.check(result.catalog) == []

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_full_lp(self, seed):
        """Test the optimum equals the LP over the full catalog."""
        instance = random_instance(seed)
        full = solve_lp(build_lp(generate_catalog(instance)))

        result = solve_lp_by_colgen(instance)

        if full.optimal:
            assert result.optimal
            assert result.objective == pytest.approx(full.objective, abs=1e-7)
            assert separate_dual(result.dual, instance) is None
        else:
            assert result.status == "infeasible"

    def test_infeasible(self):
        """Test an unreachable request is proven infeasible."""
        instance = Instance(
            requests=(
                Request(id=0, origin=(0.5, 0.0), destination=(1.0, 0.0)),
                Request(id=1, origin=(90.0, 0.0), destination=(91.0, 0.0)),
            ),
            vehicles=(Vehicle(id=0, position=(0.0, 0.0), capacity=2),),
        )

        result = solve_lp_by_colgen(instance)

        assert result.status == "infeasible"
        assert result.primal is None

    def test_initial_columns_and_threads(self):
        """Test warm start columns and parallel pricing keep the optimum."""
        instance = random_instance(3)
        cold = solve_lp_by_colgen(instance)
        warm = solve_lp_by_colgen(
            instance, initial_columns=[(Trip.of(0), 0), (Trip.of(1), 1)], jobs=2
        )

        assert warm.objective == pytest.approx(cold.objective, abs=1e-7)

    def test_iteration_log(self, tmp_path):
        """Test the CSV log has one row per master solve."""
        path = tmp_path / "colgen.csv"

        result = solve_lp_by_colgen(gen_gap_family(2).instance, log_path=path)

        with path.open() as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == LOG_COLUMNS
        assert len(rows) - 1 == len(result.log)
        assert rows[-1][2] == "0"
        assert result.iterations == len(result.log) - 1
