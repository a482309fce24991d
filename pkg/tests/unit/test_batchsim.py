"""
Unit tests for batchsim module.
"""

import csv
import dataclasses
import sys
import os

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "../../src"))

from batchsim import (
    CSV_COLUMNS,
    Method,
    RequestStatus,
    SimulationConfig,
    add_dummies,
    admit,
    cover_with_dummies,
    freeze_round,
    generate_arrivals,
    initial_state,
    load_simulation_config,
    penalty_rounding_trials,
    repeated_rounding_survival,
    run_round,
    run_simulation,
    simulation_config_from_dict,
    solve_round,
    write_aggregate,
    write_round_csv,
)
from generators import gen_tightness_family
from lp import build_lp, solve_lp
from model import Instance, Request, Trip, Vehicle, build_assignment
from tripgen import generate_catalog
from utils import read_json
from validators import ValidationError


@pytest.fixture
def config():
    """Small fleet on a small region with a few arrivals per round."""
    return SimulationConfig(
        arrival_rate=0.1,
        horizon_rounds=3,
        batch_interval=30.0,
        fleet_size=3,
        capacity=2,
        region_size_km=2.0,
        timings=False,
    )


@pytest.fixture
def penalized_tightness():
    """k=2 tightness family with penalty 5 per request, dummies added."""
    family = gen_tightness_family(2)
    requests = tuple(
        dataclasses.replace(r, penalty=5.0) for r in family.instance.requests
    )
    return add_dummies(dataclasses.replace(family.instance, requests=requests))


class TestAddDummies:
    """Tests for add_dummies function."""

    def test_one_dummy_per_request(self):
        """Test dummy ids follow the real vehicles."""
        instance = Instance(
            requests=(
                Request(id=0, origin=(0, 0), destination=(1, 0), penalty=2.0),
                Request(id=1, origin=(0, 1), destination=(1, 1), penalty=3.0),
            ),
            vehicles=(Vehicle(id=4, position=(0, 0)),),
        )

        extended = add_dummies(instance)

        dummies = [v for v in extended.vehicles if v.is_dummy]
        assert [(v.id, v.dummy_for) for v in dummies] == [(5, 0), (6, 1)]
        assert dummies[0].position == (0, 0)

    def test_idempotent(self, penalized_tightness):
        """Test requests that already have a dummy are skipped."""
        again = add_dummies(penalized_tightness)

        assert len(again.vehicles) == len(penalized_tightness.vehicles)

    def test_extends_explicit_catalog(self, penalized_tightness):
        """Test dummy entries are added to an explicit catalog."""
        catalog = penalized_tightness.trips
        dummy = [v for v in penalized_tightness.vehicles if v.dummy_for == 1][0]

        assert catalog.cost(catalog.trip_id(Trip.of(1)), dummy.id) == 5.0
        assert catalog.cost(0, dummy.id) == 0.0
        assert len(catalog.per_vehicle[dummy.id]) == 2

    def test_always_feasible(self):
        """Test the penalty version of an uncoverable instance is solvable."""
        instance = Instance(
            requests=(
                Request(id=0, origin=(90, 0), destination=(91, 0), penalty=9.0),
            ),
            vehicles=(Vehicle(id=0, position=(0, 0)),),
        )
        problem = add_dummies(instance)

        result = solve_lp(build_lp(generate_catalog(problem)))

        assert result.optimal
        assert result.objective == pytest.approx(9.0)


class TestCoverWithDummies:
    """Tests for cover_with_dummies function."""

    def test_uncovered_go_to_dummies(self, penalized_tightness):
        """Test every unassigned request ends up with its dummy."""
        catalog = penalized_tightness.trips
        partial = build_assignment({0: catalog.trip_id(Trip.of(1, 2))}, catalog)

        covered = cover_with_dummies(partial, catalog, penalized_tightness)

        assert covered.unassigned == frozenset()
        assert covered.cost == pytest.approx(1.0 + 5.0)


class TestPenaltyRounding:
    """Tests for the penalty-version rounding helpers."""

    def test_trial_costs_bounded_below(self, penalized_tightness):
        """Test rounded costs never beat the LP optimum."""
        catalog = penalized_tightness.trips
        lp = solve_lp(build_lp(catalog))

        stats = penalty_rounding_trials(
            lp.primal, catalog, penalized_tightness, trials=50
        )

        assert stats.trials == 50
        assert stats.mean_cost >= lp.objective - 1e-9
        assert stats.penalty_total == 15.0
        assert 0.0 <= stats.mean_penalty_paid <= stats.penalty_total

    def test_survival_decreases(self):
        """Test the never-assigned fraction shrinks geometrically."""
        family = gen_tightness_family(2)

        result = repeated_rounding_survival(
            family.solution, family.catalog, rounds=4, replications=400
        )

        assert result.replications == 400
        assert result.fractions[0] == pytest.approx(0.25, abs=0.05)
        assert all(a >= b for a, b in zip(result.fractions, result.fractions[1:]))
        assert result.fractions[-1] < 0.05


class TestSimulationConfig:
    """Tests for simulation config loading."""

    def test_defaults(self):
        """Test an empty object takes every default."""
        config = simulation_config_from_dict({})

        assert config.methods == ("ilp", "lp+rand", "lp+det")
        assert config.driver == "ilp"
        assert config.batch_interval == 30.0

    def test_driver_defaults_to_first_method(self):
        """Test the driver follows the first listed method."""
        config = simulation_config_from_dict({"methods": ["lp+det", "ilp"]})

        assert config.driver == "lp+det"

    def test_unknown_method(self):
        """Test unknown methods are rejected."""
        with pytest.raises(ValidationError, match="must be one of"):
            simulation_config_from_dict({"methods": ["greedy"]})

    def test_growth_below_one(self):
        """Test penalties must not shrink on rejection."""
        with pytest.raises(ValidationError, match="penalty.growth must be >= 1"):
            simulation_config_from_dict({"penalty": {"growth": 0.5}})

    def test_timings_type(self):
        """Test timings must be a boolean."""
        with pytest.raises(ValidationError, match="timings must be a boolean"):
            simulation_config_from_dict({"timings": "yes"})

    def test_load_file(self, tmp_path):
        """Test loading a config file."""
        path = tmp_path / "sim.json"
        path.write_text(
            '{"fleet_size": 4, "seeds": [1, 2], "qos": {"max_wait": 120}}'
        )

        config = load_simulation_config(path)

        assert config.fleet_size == 4
        assert config.seeds == (1, 2)
        assert config.qos.max_wait == 120.0


class TestRoundMechanics:
    """Tests for arrivals, admission and single rounds."""

    def test_initial_state(self, config):
        """Test the fleet is placed reproducibly inside the region."""
        first = initial_state(config, seed=3)
        second = initial_state(config, seed=3)

        positions = [f.position for f in first.fleet]
        assert positions == [f.position for f in second.fleet]
        assert len(first.fleet) == 3
        assert all(0.0 <= c <= 2.0 for f in first.fleet for c in f.position)

    def test_generate_arrivals(self, config):
        """Test arrivals are reproducible with consecutive ids at the clock."""
        arrivals = generate_arrivals(config, 0, 5, clock=150.0, first_id=10)

        assert arrivals == generate_arrivals(config, 0, 5, clock=150.0, first_id=10)
        assert [r.id for r in arrivals] == list(range(10, 10 + len(arrivals)))
        assert all(r.request_time == 150.0 for r in arrivals)

    def test_admit(self, config):
        """Test admission sets the initial penalty and keeps the input intact."""
        state = initial_state(config, 0)
        request = Request(id=0, origin=(0.0, 0.0), destination=(0.3, 0.4))

        admitted = admit(state, [request], config)

        assert admitted.waiting[0].penalty == pytest.approx(10.0 * 0.5)
        assert admitted.status[0] == RequestStatus.WAITING
        assert admitted.next_request_id == 1
        assert state.waiting == {}

        with pytest.raises(ValidationError, match="already arrived"):
            admit(admitted, [request], config)

    @pytest.mark.parametrize("method", [m.value for m in Method])
    def test_run_round(self, config, method):
        """Test a round conserves requests and never modifies its input."""
        state = initial_state(config, 1)
        arrivals = [
            Request(id=0, origin=(0.5, 0.5), destination=(1.5, 0.5)),
            Request(id=1, origin=(1.0, 1.0), destination=(1.0, 1.8)),
        ]

        new, report = run_round(state, method, 7, config, arrivals=arrivals)

        assert state.metrics.arrivals == 0
        assert new.conservation_holds()
        assert new.round == 1
        assert new.clock == 30.0
        assert report.requests == 2
        assert 0.0 <= report.rejected_pct <= 100.0

    def test_empty_round(self, config):
        """Test a round without requests just advances the clock."""
        new, report = run_round(initial_state(config, 0), "ilp", 0, config)

        assert report.requests == 0
        assert new.clock == 30.0
        assert new.conservation_holds()

    def test_ilp_never_worse(self, config):
        """Test the ILP total cost is at most either rounding's."""
        state = admit(
            initial_state(config, 2),
            generate_arrivals(config, 2, 0, 0.0, 0)
            + [Request(id=99, origin=(0.2, 0.2), destination=(1.9, 1.9))],
            config,
        )
        problem = freeze_round(state, config)

        ilp = solve_round(problem, Method.ILP, 0)
        for method in (Method.LP_RAND, Method.LP_DET):
            outcome = solve_round(problem, method, 0)
            assert ilp.assignment.cost <= outcome.assignment.cost + 1e-7


class TestRunSimulation:
    """Tests for run_simulation and its report writers."""

    def test_rows_and_conservation(self, config):
        """Test one row per round and method, and request conservation."""
        report = run_simulation(config, seed=0)

        assert len(report.rows) == config.horizon_rounds * len(config.methods)
        assert report.aggregate["conservation_holds"] is True
        assert report.aggregate["rng"] == "philox4x64-10"
        assert set(report.aggregate["methods"]) == set(config.methods)
        totals = report.aggregate["totals"]
        assert totals["arrivals"] == sum(
            v for k, v in totals.items() if k != "arrivals"
        )

    def test_reproducible(self, config):
        """Test the same seed gives the same rows when timings are off."""
        first = run_simulation(config, seed=4)
        second = run_simulation(config, seed=4)

        assert first.rows == second.rows

    def test_integrality_gap_at_least_one(self, config):
        """Test the ILP never beats the LP bound."""
        report = run_simulation(config, seed=5)

        for row in report.rows:
            if row.integrality_gap is not None:
                assert row.integrality_gap >= 1.0 - 1e-7

    def test_writers(self, tmp_path, config):
        """Test the round CSV and aggregate JSON."""
        report = run_simulation(config, seed=0)
        csv_path = tmp_path / "rounds.csv"
        json_path = tmp_path / "aggregate.json"

        write_round_csv(report.rows, csv_path)
        write_aggregate(report.aggregate, json_path)

        with csv_path.open() as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 1 + len(report.rows)
        assert read_json(json_path)["seed"] == 0
