"""
Unit tests for lp module.
"""

import math
import sys
import os

import numpy as np
import pytest
from scipy.optimize import linprog

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "../../src"))

from generators import (
    RandomInstanceParams,
    gen_gap_family,
    gen_random,
    gen_tightness_family,
)
from lp import (
    LPForm,
    NumericalFailure,
    RevisedSimplex,
    build_lp,
    solve_lp,
    support_histogram,
    write_lp_file,
)
from model import EMPTY_TRIP, CatalogBuilder, FractionalSolution, Trip
from tripgen import generate_catalog


def random_catalog(seed):
    """Catalog of a small random instance."""
    instance = gen_random(
        RandomInstanceParams(
            n_requests=4, n_vehicles=3, capacity=2, region_km=2.0, seed=seed
        )
    )
    return instance, generate_catalog(instance)


def highs_objective(lp):
    """Reference optimum from scipy's HiGHS solver, or None if infeasible."""
    ones = np.ones(lp.n_rows)
    if lp.form == LPForm.EQUALITY:
        res = linprog(lp.c, A_eq=lp.A, b_eq=ones, bounds=(0, None), method="highs")
    else:
        n_req = len(lp.request_rows)
        signs = np.concatenate([-np.ones(n_req), np.ones(len(lp.vehicle_rows))])
        res = linprog(
            lp.c,
            A_ub=lp.A * signs[:, None],
            b_ub=ones * signs,
            bounds=(0, None),
            method="highs",
        )
    if res.status == 2:
        return None
    assert res.status == 0
    return res.fun + lp.offset


@pytest.fixture
def uncoverable_catalog():
    """Request 1 has no admissible trip."""
    builder = CatalogBuilder([0, 1])
    builder.set_cost(EMPTY_TRIP, 0, 0.0)
    builder.set_cost(Trip.of(0), 0, 1.0)
    return builder.build()


class TestBuildLp:
    """Tests for build_lp function."""

    def test_shape_and_order(self):
        """Test rows are requests then vehicles, columns by (vehicle, trip)."""
        family = gen_gap_family(2)
        lp = build_lp(family.catalog)

        assert lp.n_rows == 3 + 2
        assert lp.n_cols == 2 * 7
        assert list(lp.columns) == sorted(lp.columns, key=lambda c: (c[1], c[0]))
        assert np.all(lp.A[3:].sum(axis=0) == 1.0)

    def test_covering_costs_shifted(self):
        """Test covering columns are priced relative to the empty trip."""
        builder = CatalogBuilder([0])
        builder.set_cost(EMPTY_TRIP, 0, 2.0)
        builder.set_cost(Trip.of(0), 0, 5.0)
        lp = build_lp(builder.build(), form=LPForm.COVERING)

        assert list(lp.c) == [0.0, 3.0]
        assert lp.offset == 2.0


class TestSolveLp:
    """Tests for solve_lp function."""

    def test_gap_family_k2(self):
        """Test the k=2 gap instance has LP optimum 3/2."""
        family = gen_gap_family(2)
        result = solve_lp(build_lp(family.catalog))

        assert result.optimal
        assert result.objective == pytest.approx(1.5)
        assert result.primal.check(family.catalog) == []

    @pytest.mark.parametrize("k", range(2, 9))
    def test_gap_family(self, k):
        """Test the gap family LP optimum is (k+1)/k."""
        family = gen_gap_family(k)

        result = solve_lp(build_lp(family.catalog))

        assert result.objective == pytest.approx((k + 1) / k)

    @pytest.mark.parametrize("k", range(2, 9))
    def test_tightness_family(self, k):
        """Test the tightness family LP optimum is (k+1)/k."""
        family = gen_tightness_family(k)
        result = solve_lp(build_lp(family.catalog))

        assert result.objective == pytest.approx((k + 1) / k)
        assert family.solution.check(family.catalog) == []

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("form", [LPForm.EQUALITY, LPForm.COVERING])
    def test_matches_highs(self, seed, form):
        """Test the optimum agrees with an independent solver."""
        _, catalog = random_catalog(seed)
        lp = build_lp(catalog, form=form)
        expected = highs_objective(lp)

        result = solve_lp(lp)

        if expected is None:
            assert result.status == "infeasible"
        else:
            assert result.optimal
            assert result.objective == pytest.approx(expected, abs=1e-7)

    @pytest.mark.parametrize("seed", range(6))
    def test_forms_agree(self, seed):
        """Test equality and covering forms share the optimum."""
        _, catalog = random_catalog(seed)
        equality = solve_lp(build_lp(catalog))
        covering = solve_lp(build_lp(catalog, form=LPForm.COVERING))

        if equality.optimal:
            assert covering.objective == pytest.approx(equality.objective, abs=1e-7)
            assert covering.primal.check(catalog) == []

    @pytest.mark.parametrize("seed", range(6))
    def test_strong_duality(self, seed):
        """Test the dual is feasible and matches the primal objective."""
        _, catalog = random_catalog(seed)
        result = solve_lp(build_lp(catalog))
        if not result.optimal:
            pytest.skip("instance infeasible")

        assert result.dual.objective == pytest.approx(result.objective, abs=1e-7)
        assert result.dual.violations(catalog) == []

    @pytest.mark.parametrize("seed", range(6))
    def test_covering_dual_non_negative(self, seed):
        """Test covering-form request duals are non-negative."""
        _, catalog = random_catalog(seed)
        result = solve_lp(build_lp(catalog, form=LPForm.COVERING))
        if not result.optimal:
            pytest.skip("instance infeasible")

        assert min(result.dual.y.values()) >= -1e-9
        assert result.dual.objective == pytest.approx(result.objective, abs=1e-7)
        assert result.dual.violations(catalog) == []

    def test_covering_dual_with_costly_empty_trip(self):
        """Test z_v drops below zero by at most the empty-trip cost."""
        builder = CatalogBuilder([0])
        builder.set_cost(EMPTY_TRIP, 0, 2.0)
        builder.set_cost(Trip.of(0), 0, 5.0)
        builder.set_cost(EMPTY_TRIP, 1, 0.0)
        builder.set_cost(Trip.of(0), 1, 1.0)
        catalog = builder.build()

        result = solve_lp(build_lp(catalog, form=LPForm.COVERING))

        assert result.objective == pytest.approx(3.0)
        assert result.dual.z[0] == pytest.approx(-2.0)
        assert result.dual.objective == pytest.approx(3.0, abs=1e-7)
        assert result.dual.violations(catalog) == []
        for vid, z in result.dual.z.items():
            assert z + catalog.cost(0, vid) >= -1e-9

    def test_infeasible(self, uncoverable_catalog):
        """Test an uncoverable request yields Farkas multipliers."""
        result = solve_lp(build_lp(uncoverable_catalog))

        assert result.status == "infeasible"
        assert math.isinf(result.objective)
        assert result.primal is None
        assert result.farkas is not None

    def test_debug_trace(self):
        """Test debug mode records objective pairs."""
        result = solve_lp(build_lp(gen_gap_family(2).catalog), debug=True)

        assert len(result.trace) >= 1
        assert all(len(pair) == 2 for pair in result.trace)


class TestRestrict:
    """Tests for StandardFormLP.restrict."""

    def test_fix_one(self):
        """Test fixing a column removes its rows and pays its cost."""
        lp = build_lp(gen_gap_family(2).catalog)
        j = lp.columns.index((4, 0))
        sub, keep = lp.restrict([], [j])

        assert sub.offset == 1.0
        assert sub.request_rows == (2,)
        assert sub.vehicle_rows == (1,)
        assert all(lp.columns[i][1] == 1 for i in keep)
        assert solve_lp(sub).objective == pytest.approx(2.0)

    def test_conflict(self):
        """Test fixing two columns sharing a row is rejected."""
        lp = build_lp(gen_gap_family(2).catalog)
        a = lp.columns.index((4, 0))
        b = lp.columns.index((5, 1))

        sub, keep = lp.restrict([], [a, b])

        assert sub is None
        assert keep == []


class TestRevisedSimplex:
    """Tests for RevisedSimplex class."""

    def test_small_problem(self):
        """Test min x0 + 2 x1 s.t. x0 + x1 = 1."""
        status, x, pi = RevisedSimplex(
            np.array([[1.0, 1.0]]), np.array([1.0]), np.array([1.0, 2.0])
        ).solve()

        assert status == "optimal"
        assert list(x) == [1.0, 0.0]
        assert pi[0] == pytest.approx(1.0)

    def test_unbounded(self):
        """Test an unbounded direction raises NumericalFailure."""
        simplex = RevisedSimplex(
            np.array([[1.0, -1.0]]), np.array([1.0]), np.array([0.0, -1.0])
        )

        with pytest.raises(NumericalFailure, match="unbounded"):
            simplex.solve()


class TestSupportHistogram:
    """Tests for support_histogram function."""

    def test_fractions(self):
        """Test integral and half-integral fractions."""
        x = FractionalSolution(
            {(1, 0): 1.0, (2, 0): 0.5, (3, 1): 0.5, (4, 1): 0.25, (5, 1): 0.0},
            objective=0.0,
        )
        histogram = support_histogram(x, bins=4)

        assert histogram.n_supported == 4
        assert sum(histogram.counts) == 4
        assert histogram.counts[-1] == 1
        assert histogram.integral_fraction == pytest.approx(0.25)
        assert histogram.half_integral_fraction == pytest.approx(2 / 3)

    def test_bins_validated(self):
        """Test fewer than two bins is rejected."""
        with pytest.raises(ValueError, match="at least 2"):
            support_histogram(FractionalSolution({}, 0.0), bins=1)


class TestWriteLpFile:
    """Tests for write_lp_file function."""

    def test_sections(self, tmp_path):
        """Test the dump has every CPLEX-LP section."""
        path = tmp_path / "gap.lp"
        write_lp_file(build_lp(gen_gap_family(2).catalog), path)
        text = path.read_text()

        for section in ("Minimize", "Subject To", "Bounds", "End"):
            assert section in text
        assert " r_0: " in text
        assert "= 1" in text
        assert "0 <= x_t4_v0 <= 1" in text
