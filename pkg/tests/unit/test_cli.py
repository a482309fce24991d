"""
Unit tests for cli module.
"""

import json
import math
import sys
import os

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "../../src"))

from cli import (
    EXIT_INFEASIBLE,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_TIME_LIMIT,
    EXIT_USAGE,
    main,
)
from lp import NumericalFailure
from mip import MipResult


def read(path):
    with open(path) as f:
        return json.load(f)


@pytest.fixture
def gap_dir(tmp_path):
    """Gap family k=2 written by the gen command."""
    out = tmp_path / "g2"
    assert main(["gen", "--family", "gap", "--k", "2", "--out", str(out)]) == EXIT_OK
    return out


@pytest.fixture
def tightness_dir(tmp_path):
    """Tightness family k=2 with its bundled fractional solution."""
    out = tmp_path / "t2"
    assert main(["gen", "--family", "tightness", "--out", str(out)]) == EXIT_OK
    return out


class TestGen:
    """Tests for the gen command."""

    def test_family_files(self, gap_dir, tightness_dir):
        """Test families write an instance and catalog, tightness also x."""
        assert (gap_dir / "instance.json").exists()
        assert (gap_dir / "catalog.json").exists()
        assert not (gap_dir / "x.json").exists()
        assert (tightness_dir / "x.json").exists()

    def test_random_with_trips(self, tmp_path):
        """Test random generation with an explicit catalog."""
        out = tmp_path / "r"

        code = main(
            [
                "gen",
                "--family",
                "random",
                "--requests",
                "4",
                "--vehicles",
                "2",
                "--seed",
                "3",
                "--generate-trips",
                "--out",
                str(out),
            ]
        )

        assert code == EXIT_OK
        assert len(read(out / "instance.json")["requests"]) == 4
        assert (out / "catalog.json").exists()

    def test_bad_k(self, tmp_path):
        """Test a family parameter below 2 is a usage error."""
        code = main(["gen", "--family", "gap", "--k", "1", "--out", str(tmp_path)])

        assert code == EXIT_USAGE


class TestSolve:
    """Tests for the solve command."""

    def test_lp(self, gap_dir, capsys):
        """Test the LP objective, support fractions and duals are reported."""
        out = gap_dir / "x.json"

        code = main(
            ["solve", "--in", str(gap_dir), "--method", "lp", "--out", str(out)]
        )

        assert code == EXIT_OK
        data = read(out)
        assert data["objective"] == pytest.approx(1.5)
        assert data["method"] == "lp"
        assert set(data["dual"]) == {"y", "z"}
        assert "objective=1.5" in capsys.readouterr().out

    def test_ilp(self, gap_dir):
        """Test the ILP solution file."""
        out = gap_dir / "a.json"

        code = main(
            ["solve", "--in", str(gap_dir), "--method", "ilp", "--out", str(out)]
        )

        assert code == EXIT_OK
        data = read(out)
        assert data["cost"] == pytest.approx(2.0)
        assert data["unassigned"] == []
        assert data["root_bound"] == pytest.approx(1.5)

    def test_time_limit_without_incumbent(self, gap_dir, capsys):
        """Test a zero time limit with no solution is not reported as infeasible."""
        out = gap_dir / "a.json"

        code = main(
            [
                "solve",
                "--in",
                str(gap_dir),
                "--method",
                "ilp",
                "--time-limit",
                "0",
                "--out",
                str(out),
            ]
        )

        assert code == EXIT_TIME_LIMIT
        assert not out.exists()
        assert "time limit" in capsys.readouterr().err

    def test_no_solution_is_infeasible(self, gap_dir, mocker):
        """Test an exhausted search without a solution maps to infeasible."""
        mocker.patch(
            "cli.solve_ilp",
            return_value=MipResult("infeasible", None, math.inf, 1.5, 1.5, math.inf, 3),
        )

        code = main(
            ["solve", "--in", str(gap_dir), "--method", "ilp", "--out", "a.json"]
        )

        assert code == EXIT_INFEASIBLE

    def test_colgen_with_log(self, gap_dir):
        """Test column generation writes its solution and iteration log."""
        out = gap_dir / "cg.json"
        log = gap_dir / "cg.csv"

        code = main(
            [
                "solve",
                "--in",
                str(gap_dir),
                "--method",
                "colgen",
                "--colgen-log",
                str(log),
                "--out",
                str(out),
            ]
        )

        assert code == EXIT_OK
        assert read(out)["objective"] == pytest.approx(1.5)
        assert log.exists()

    def test_lp_dump(self, gap_dir):
        """Test the LP file is written on request."""
        dump = gap_dir / "model.lp"

        main(
            [
                "solve",
                "--in",
                str(gap_dir),
                "--method",
                "lp",
                "--lp-dump",
                str(dump),
                "--out",
                str(gap_dir / "x.json"),
            ]
        )

        assert dump.read_text().startswith("\\")

    def test_missing_catalog(self, tmp_path):
        """Test a random instance without a catalog is a usage error."""
        out = tmp_path / "r"
        main(["gen", "--family", "random", "--requests", "2", "--out", str(out)])

        code = main(
            ["solve", "--in", str(out), "--method", "lp", "--out", str(out / "x.json")]
        )

        assert code == EXIT_USAGE

    def test_infeasible_then_penalty(self, tmp_path):
        """Test zero waiting tolerance is infeasible unless dummies are added."""
        out = tmp_path / "r"
        main(
            [
                "gen",
                "--family",
                "random",
                "--requests",
                "3",
                "--vehicles",
                "2",
                "--max-wait",
                "0",
                "--out",
                str(out),
            ]
        )
        args = ["solve", "--in", str(out), "--generate-trips", "--method", "lp"]

        assert main(args + ["--out", str(out / "x.json")]) == EXIT_INFEASIBLE
        assert main(args + ["--penalty", "--out", str(out / "x.json")]) == EXIT_OK

    def test_numerical_failure(self, gap_dir, mocker):
        """Test a numerical failure maps to its own exit code."""
        mocker.patch("cli.solve_lp", side_effect=NumericalFailure("singular basis"))

        code = main(
            ["solve", "--in", str(gap_dir), "--method", "lp", "--out", "x.json"]
        )

        assert code == EXIT_NUMERICAL

    def test_unknown_method(self, gap_dir):
        """Test argument errors are usage errors."""
        code = main(
            ["solve", "--in", str(gap_dir), "--method", "simplex", "--out", "x"]
        )

        assert code == EXIT_USAGE


class TestRound:
    """Tests for the round command."""

    def test_trials(self, tightness_dir):
        """Test rounding statistics are written with their seeds."""
        out = tightness_dir / "stats.json"

        code = main(
            [
                "round",
                "--in",
                str(tightness_dir),
                "--x",
                str(tightness_dir / "x.json"),
                "--method",
                "rand",
                "--trials",
                "200",
                "--seed",
                "1",
                "--out",
                str(out),
            ]
        )

        assert code == EXIT_OK
        data = read(out)
        assert data["method"] == "rand"
        assert data["seeds"]["base_seed"] == 1
        assert data["seeds"]["count"] == 200

    def test_zero_trials(self, tightness_dir):
        """Test at least one trial is required."""
        code = main(
            [
                "round",
                "--in",
                str(tightness_dir),
                "--x",
                str(tightness_dir / "x.json"),
                "--method",
                "rand",
                "--trials",
                "0",
                "--out",
                str(tightness_dir / "stats.json"),
            ]
        )

        assert code == EXIT_USAGE

    def test_missing_solution_file(self, tightness_dir):
        """Test an unreadable input file is an I/O error."""
        code = main(
            [
                "round",
                "--in",
                str(tightness_dir),
                "--x",
                str(tightness_dir / "missing.json"),
                "--method",
                "det",
                "--out",
                str(tightness_dir / "stats.json"),
            ]
        )

        assert code == EXIT_IO

    def test_bad_jobs_env(self, tightness_dir, monkeypatch):
        """Test a malformed RTV_JOBS is a usage error."""
        monkeypatch.setenv("RTV_JOBS", "many")

        code = main(
            [
                "round",
                "--in",
                str(tightness_dir),
                "--x",
                str(tightness_dir / "x.json"),
                "--method",
                "det",
                "--out",
                str(tightness_dir / "stats.json"),
            ]
        )

        assert code == EXIT_USAGE


class TestSimulate:
    """Tests for the simulate command."""

    def test_replications(self, tmp_path):
        """Test one round CSV per seed and a combined aggregate."""
        config = tmp_path / "sim.json"
        config.write_text(
            json.dumps(
                {
                    "horizon_rounds": 2,
                    "fleet_size": 2,
                    "region_size_km": 2.0,
                    "arrival_rate": 0.05,
                    "seeds": [0, 1],
                    "timings": False,
                }
            )
        )
        out = tmp_path / "runs"

        code = main(
            ["simulate", "--config", str(config), "--jobs", "2", "--out", str(out)]
        )

        assert code == EXIT_OK
        assert (out / "rounds_seed0.csv").exists()
        assert (out / "rounds_seed1.csv").exists()
        replications = read(out / "aggregate.json")["replications"]
        assert [r["seed"] for r in replications] == [0, 1]
        assert all(r["conservation_holds"] for r in replications)

    def test_invalid_config(self, tmp_path):
        """Test an invalid config is a usage error."""
        config = tmp_path / "sim.json"
        config.write_text('{"methods": []}')

        code = main(["simulate", "--config", str(config), "--out", str(tmp_path)])

        assert code == EXIT_USAGE
