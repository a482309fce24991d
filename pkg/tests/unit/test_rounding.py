"""
Unit tests for rounding module.
"""

import math
import sys
import os

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "../../src"))

from generators import gen_gap_family, gen_tightness_family
from model import EMPTY_TRIP, CatalogBuilder, FractionalSolution, Trip
from rounding import (
    TAIL_DELTAS,
    ClosureError,
    RoundingMethod,
    chernoff_bound,
    multiplicity_correction,
    round_dependent,
    round_deterministic,
    round_independent,
    run_trials,
    stats_to_dict,
)
from validators import ValidationError


@pytest.fixture
def tightness():
    """Tightness instance with k=2 and its half-integral solution."""
    return gen_tightness_family(2)


class TestChernoffBound:
    """Tests for chernoff_bound function."""

    def test_values(self):
        """Test the bound at known points."""
        assert chernoff_bound(0.0) == 1.0
        assert chernoff_bound(1.0) == pytest.approx(math.e / 4)
        assert chernoff_bound(2.0) < chernoff_bound(1.0)


class TestMultiplicityCorrection:
    """Tests for multiplicity_correction function."""

    def test_resolves_double_cover(self):
        """Test a doubly covered request is kept by one vehicle."""
        catalog = gen_gap_family(2).catalog
        # Vehicle 0 picks {0, 1}, vehicle 1 picks {0, 2}.
        assignment = multiplicity_correction({0: 4, 1: 5}, catalog)

        assert assignment.by_vehicle == {0: 4, 1: 3}
        assert assignment.cost == 2.0
        assert assignment.unassigned == frozenset()

    def test_keeps_request_where_dropping_costs_most(self):
        """Test the holder whose competitors save most keeps the request."""
        builder = CatalogBuilder([0, 1])
        for vid in (0, 1):
            builder.set_cost(EMPTY_TRIP, vid, 0.0)
            builder.set_cost(Trip.of(1), vid, 1.0)
        builder.set_cost(Trip.of(0), 0, 1.0)
        builder.set_cost(Trip.of(0, 1), 0, 1.5)
        builder.set_cost(Trip.of(0), 1, 1.0)
        builder.set_cost(Trip.of(0, 1), 1, 4.0)
        catalog = builder.build()
        both = catalog.trip_id(Trip.of(0, 1))

        assignment = multiplicity_correction({0: both, 1: both}, catalog)

        # Dropping request 0 saves 0.5 on vehicle 0 and 3.0 on vehicle 1.
        assert assignment.by_vehicle[0] == both
        assert assignment.by_vehicle[1] == catalog.trip_id(EMPTY_TRIP)
        assert assignment.cost == 1.5

    def test_never_increases_cost(self, tightness):
        """Test corrected cost is at most the raw cost."""
        catalog = tightness.catalog
        raw = {0: catalog.trip_id(Trip.of(1, 2)), 1: catalog.trip_id(Trip.of(0, 2))}
        raw[2] = catalog.trip_id(Trip.of(0, 1))
        raw_cost = sum(catalog.cost(t, v) for v, t in raw.items())

        assignment = multiplicity_correction(raw, catalog)

        assert assignment.cost <= raw_cost
        assert assignment.unassigned == frozenset()

    def test_closure_error(self):
        """Test a missing reduced trip raises ClosureError."""
        builder = CatalogBuilder([0, 1])
        for vid in (0, 1):
            builder.set_cost(EMPTY_TRIP, vid, 0.0)
            builder.set_cost(Trip.of(0), vid, 1.0)
            builder.set_cost(Trip.of(0, 1), vid, 2.0)
        catalog = builder.build()
        both = catalog.trip_id(Trip.of(0, 1))

        with pytest.raises(ClosureError, match="missing for vehicle 0"):
            multiplicity_correction({0: both, 1: both}, catalog)


class TestRoundIndependent:
    """Tests for round_independent function."""

    def test_certain_values(self):
        """Test values 1 are always drawn and 0 never."""
        x = FractionalSolution({(1, 0): 1.0, (2, 0): 0.0, (3, 1): 1.0}, objective=2.0)

        assert round_independent(x, seed=5) == ((1, 0), (3, 1))

    def test_reproducible(self, tightness):
        """Test the same seed gives the same draw."""
        assert round_independent(tightness.solution, 11) == round_independent(
            tightness.solution, 11
        )


class TestRoundDependent:
    """Tests for round_dependent function."""

    @pytest.mark.parametrize("seed", range(20))
    def test_valid_assignment(self, tightness, seed):
        """Test every draw gives one admissible trip per vehicle."""
        assignment = round_dependent(tightness.solution, tightness.catalog, seed)

        assert set(assignment.by_vehicle) == {0, 1, 2}
        for vid, tid in assignment.by_vehicle.items():
            assert tightness.catalog.admissible(tid, vid)

    def test_reproducible(self, tightness):
        """Test the same seed gives the same assignment."""
        first = round_dependent(tightness.solution, tightness.catalog, 3)
        second = round_dependent(tightness.solution, tightness.catalog, 3)

        assert first == second

    def test_bad_vehicle_sum(self, tightness):
        """Test a vehicle distribution not summing to one is rejected."""
        values = dict(tightness.solution.values)
        values[(0, 0)] = 0.1
        x = FractionalSolution(values, objective=1.0)

        with pytest.raises(ValidationError, match="vehicle 0 fractional values sum"):
            round_dependent(x, tightness.catalog, 0)


class TestRoundDeterministic:
    """Tests for round_deterministic function."""

    def test_argmax(self):
        """Test each vehicle takes its largest value."""
        catalog = gen_gap_family(2).catalog
        x = FractionalSolution(
            {(4, 0): 0.7, (3, 0): 0.3, (3, 1): 0.6, (0, 1): 0.4}, objective=0.0
        )

        assignment = round_deterministic(x, catalog)

        assert assignment.by_vehicle == {0: 4, 1: 3}

    def test_ties_to_lowest_trip(self, tightness):
        """Test equal values resolve to the lowest trip id."""
        assignment = round_deterministic(tightness.solution, tightness.catalog)

        assert assignment.by_vehicle == {0: 0, 1: 0, 2: 0}
        assert assignment.unassigned == frozenset({0, 1, 2})


class TestRunTrials:
    """Tests for run_trials function."""

    def test_trials_validated(self, tightness):
        """Test at least one trial is required."""
        with pytest.raises(ValidationError, match="at least 1"):
            run_trials(
                tightness.solution, tightness.catalog, RoundingMethod.DEPENDENT, 0
            )

    def test_dependent_marginals(self, tightness):
        """Test indicator means match x and same-vehicle pairs are exclusive."""
        stats = run_trials(
            tightness.solution, tightness.catalog, RoundingMethod.DEPENDENT, 2000
        )

        for key, mean in stats.indicator_means.items():
            p = tightness.solution.values[key]
            assert abs(mean - p) <= 4 * math.sqrt(p * (1 - p) / 2000) + 1e-9
        for pair in stats.pair_covariances:
            tolerance = 4 * pair.sigma + 0.01
            assert pair.covariance == pytest.approx(pair.expected, abs=tolerance)

    def test_unassigned_frequency(self, tightness):
        """Test a request misses both of its vehicles with probability 1/4."""
        stats = run_trials(
            tightness.solution, tightness.catalog, RoundingMethod.DEPENDENT, 2000
        )

        for frequency in stats.per_request_unassigned_frequency.values():
            assert frequency == pytest.approx(0.25, abs=0.04)
        for r, histogram in stats.overassignment_histogram.items():
            assert sum(histogram.values()) == pytest.approx(1.0)
            assert stats.overassignment_tail[r][1] <= chernoff_bound(1) + 0.04

    def test_deterministic_has_no_spread(self, tightness):
        """Test deterministic rounding repeats the same outcome."""
        stats = run_trials(
            tightness.solution, tightness.catalog, RoundingMethod.DETERMINISTIC, 5
        )

        assert stats.cost_sigma == 0.0
        assert stats.unassigned_fraction_mean == 1.0
        assert stats.vehicle_violation_frequency is None

    def test_independent_violations(self, tightness):
        """Test independent rounding reports vehicle-row violations."""
        stats = run_trials(
            tightness.solution, tightness.catalog, RoundingMethod.INDEPENDENT, 500
        )

        assert 0.0 < stats.vehicle_violation_frequency < 1.0

    def test_threads_do_not_change_results(self, tightness):
        """Test the statistics are independent of the worker count."""
        args = (tightness.solution, tightness.catalog, RoundingMethod.DEPENDENT, 200)

        sequential = run_trials(*args, base_seed=9)
        parallel = run_trials(*args, base_seed=9, jobs=4)

        assert stats_to_dict(parallel, tightness.catalog) == stats_to_dict(
            sequential, tightness.catalog
        )


class TestStatsToDict:
    """Tests for stats_to_dict function."""

    def test_report_fields(self, tightness):
        """Test seeds, bounds and pair keys are reported."""
        stats = run_trials(
            tightness.solution, tightness.catalog, "rand", 50, base_seed=100
        )
        data = stats_to_dict(stats, tightness.catalog)

        assert data["seeds"]["base_seed"] == 100
        assert data["seeds"]["count"] == 50
        assert data["seeds"]["rng"] == "philox4x64-10"
        assert set(data["chernoff_bounds"]) == {str(d) for d in TAIL_DELTAS}
        assert "0:1,2" in data["indicator_means"]
        assert "0:" in data["indicator_means"]
        assert data["method"] == "rand"
