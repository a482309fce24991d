"""
Command-line entry point for the RTV assignment solver suite.

    python src/cli.py gen --family gap --k 2 --out g2/
    python src/cli.py solve --in g2/ --method lp --out g2/x.json
    python src/cli.py round --in g2/ --x g2/x.json --method rand --out stats.json
    python src/cli.py simulate --config sim.json --out runs/

Exit codes: 0 success, 1 I/O or unexpected error, 2 usage or validation,
3 infeasible, 4 numerical failure, 5 time limit reached without a solution.
"""

import argparse
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

from dotenv import load_dotenv

from batchsim import add_dummies, load_simulation_config, run_simulation
from batchsim import write_aggregate, write_round_csv
from colgen import solve_lp_by_colgen
from generators import (
    RandomInstanceParams,
    gen_gap_family,
    gen_random,
    gen_tightness_family,
)
from lp import NumericalFailure, build_lp, solve_lp, support_histogram, write_lp_file
from mip import solve_ilp
from model import (
    Instance,
    QoS,
    TripCatalog,
    assignment_to_dict,
    fractional_from_dict,
    fractional_to_dict,
    load_catalog,
    load_instance,
    save_catalog,
    save_instance,
    validate_catalog,
)
from rounding import RoundingMethod, run_trials, stats_to_dict
from tripgen import generate_catalog
from utils import Stopwatch, get_logger, read_json, set_log_level, write_json
from validators import (
    ValidationError,
    validate_max_trip_size,
    validate_seed,
    validate_trials,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4
EXIT_TIME_LIMIT = 5


class InfeasibleProblem(RuntimeError):
    """The requested problem has no feasible solution."""

    pass


class SolveTimeLimit(RuntimeError):
    """The time limit elapsed before any feasible solution was found."""

    pass


def _env_float(name: str) -> Optional[float]:
    value = os.environ.get(name)
    if not value:
        return None
    try:
        return float(value)
    except ValueError:
        raise ValidationError(f"{name} must be a number, got '{value}'")


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name)
    if not value:
        return default
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"{name} must be an integer, got '{value}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtv", description="RTV assignment LP/ILP, rounding and batch simulation"
    )
    parser.add_argument("--log-level", help="Override LOG_LEVEL (DEBUG, INFO, ...)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate an instance")
    gen.add_argument("--family", required=True, choices=["gap", "tightness", "random"])
    gen.add_argument("--k", type=int, default=2, help="Family parameter k >= 2")
    gen.add_argument("--requests", type=int, default=6)
    gen.add_argument("--vehicles", type=int, default=3)
    gen.add_argument("--capacity", type=int, default=2)
    gen.add_argument("--region-km", type=float, default=5.0)
    gen.add_argument("--speed", type=float, default=0.01, help="km per second")
    gen.add_argument("--max-wait", type=float, default=QoS.max_wait)
    gen.add_argument("--max-delay", type=float, default=QoS.max_delay)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument(
        "--generate-trips", action="store_true", help="Also write catalog.json"
    )
    gen.add_argument("--max-trip-size", type=int)
    gen.add_argument("--out", required=True, help="Output directory")
    gen.set_defaults(handler=cmd_gen)

    solve = sub.add_parser("solve", help="Solve the LP or ILP")
    _add_problem_arguments(solve)
    solve.add_argument("--method", required=True, choices=["ilp", "lp", "colgen"])
    solve.add_argument("--time-limit", type=float, help="ILP time limit (seconds)")
    solve.add_argument("--lp-dump", help="Write the LP in CPLEX-LP format")
    solve.add_argument("--colgen-log", help="Write the column generation CSV log")
    solve.add_argument("--out", required=True, help="Solution file")
    solve.set_defaults(handler=cmd_solve)

    rnd = sub.add_parser("round", help="Run rounding trials on a fractional solution")
    _add_problem_arguments(rnd)
    rnd.add_argument("--x", required=True, help="Fractional solution file")
    rnd.add_argument(
        "--method", required=True, choices=[m.value for m in RoundingMethod]
    )
    rnd.add_argument("--trials", type=int, default=1000)
    rnd.add_argument("--seed", type=int, default=0)
    rnd.add_argument("--jobs", type=int)
    rnd.add_argument("--out", required=True, help="Statistics file")
    rnd.set_defaults(handler=cmd_round)

    sim = sub.add_parser("simulate", help="Run the batch dispatch simulation")
    sim.add_argument("--config", required=True, help="Simulation config JSON")
    sim.add_argument("--jobs", type=int)
    sim.add_argument("--out", required=True, help="Output directory")
    sim.set_defaults(handler=cmd_simulate)
    return parser


def _add_problem_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--in", dest="input", required=True, help="Instance file or directory"
    )
    parser.add_argument(
        "--catalog", help="Catalog file (default: catalog.json beside it)"
    )
    parser.add_argument("--generate-trips", action="store_true")
    parser.add_argument("--max-trip-size", type=int)
    parser.add_argument("--penalty", action="store_true", help="Add dummy vehicles")


def _load_problem(args: argparse.Namespace) -> Tuple[Instance, TripCatalog]:
    """
    Load the instance and its catalog, adding dummies in penalty mode.

    Raises:
        ValidationError: If the catalog is missing or fails validation
    """
    path = Path(args.input)
    instance_path = path / "instance.json" if path.is_dir() else path
    instance = load_instance(instance_path)
    max_trip_size = validate_max_trip_size(args.max_trip_size)

    if not args.generate_trips:
        catalog_path = instance_path.parent / "catalog.json"
        if args.catalog:
            catalog_path = Path(args.catalog)
        if not catalog_path.exists():
            raise ValidationError(
                f"catalog '{catalog_path}' not found; "
                "pass --catalog or --generate-trips"
            )
        instance = replace(instance, trips=load_catalog(catalog_path))
    if args.penalty:
        instance = add_dummies(instance)
    catalog = generate_catalog(
        instance, max_trip_size=max_trip_size, timeout=_env_float("RTV_TRIPGEN_TIMEOUT")
    )
    if args.generate_trips:
        instance = replace(instance, trips=catalog)

    violations = validate_catalog(catalog)
    if violations:
        first = violations[0]
        raise ValidationError(
            f"catalog fails {first.kind} for trip {first.trip_id} on vehicle "
            f"{first.vehicle_id} ({len(violations)} violations)"
        )
    return instance, catalog


def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.family == "random":
        params = RandomInstanceParams(
            n_requests=args.requests,
            n_vehicles=args.vehicles,
            capacity=args.capacity,
            region_km=args.region_km,
            qos=QoS(max_wait=args.max_wait, max_delay=args.max_delay),
            speed=args.speed,
            seed=args.seed,
        )
        instance = gen_random(params)
        save_instance(instance, out / "instance.json")
        if args.generate_trips:
            catalog = generate_catalog(
                instance, max_trip_size=validate_max_trip_size(args.max_trip_size)
            )
            save_catalog(catalog, out / "catalog.json")
        print(f"wrote {out / 'instance.json'}: {len(instance.requests)} requests")
        return EXIT_OK

    if args.family == "gap":
        family = gen_gap_family(args.k)
    else:
        family = gen_tightness_family(args.k)
    save_instance(family.instance, out / "instance.json")
    save_catalog(family.catalog, out / "catalog.json")
    if family.solution is not None:
        write_json(fractional_to_dict(family.solution, family.catalog), out / "x.json")
    print(f"wrote {args.family} family k={args.k} to {out}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    instance, catalog = _load_problem(args)
    watch = Stopwatch()

    if args.method == "colgen":
        result = solve_lp_by_colgen(
            instance,
            max_trip_size=validate_max_trip_size(args.max_trip_size),
            log_path=args.colgen_log,
        )
        if not result.optimal:
            raise InfeasibleProblem("column generation master is infeasible")
        data = fractional_to_dict(result.primal, result.catalog)
        data.update(method="colgen", iterations=result.iterations)
        write_json(data, args.out)
        print(
            f"method=colgen objective={result.objective:.12g} "
            f"iterations={result.iterations} solve_ms={watch.elapsed_ms:.1f}"
        )
        return EXIT_OK

    lp = build_lp(catalog, instance)
    if args.lp_dump:
        write_lp_file(lp, args.lp_dump)

    if args.method == "lp":
        result = solve_lp(lp)
        if not result.optimal:
            raise InfeasibleProblem("LP relaxation is infeasible")
        support = support_histogram(result.primal)
        data = fractional_to_dict(result.primal, catalog)
        data.update(
            method="lp",
            integral_frac=support.integral_fraction,
            half_integral_frac=support.half_integral_fraction,
            dual={
                "y": {str(r): v for r, v in result.dual.y.items()},
                "z": {str(v): z for v, z in result.dual.z.items()},
            },
        )
        write_json(data, args.out)
        print(
            f"method=lp objective={result.objective:.12g} "
            f"solve_ms={watch.elapsed_ms:.1f} "
            f"integral_frac={support.integral_fraction:.6f} "
            f"half_integral_frac={support.half_integral_fraction:.6f}"
        )
        return EXIT_OK

    result = solve_ilp(lp, time_limit=args.time_limit)
    if result.assignment is None and result.status == "time_limit":
        raise SolveTimeLimit(
            f"no feasible solution after {args.time_limit}s, "
            f"root bound {result.root_bound:.12g}"
        )
    if result.assignment is None:
        raise InfeasibleProblem("ILP has no feasible solution")
    data = assignment_to_dict(result.assignment, catalog)
    data.update(
        method="ilp",
        status=result.status,
        root_bound=result.root_bound,
        gap=result.gap,
        nodes=result.nodes,
    )
    write_json(data, args.out)
    print(
        f"method=ilp objective={result.objective:.12g} status={result.status} "
        f"nodes={result.nodes} solve_ms={watch.elapsed_ms:.1f}"
    )
    return EXIT_OK


def cmd_round(args: argparse.Namespace) -> int:
    instance, catalog = _load_problem(args)
    trials = validate_trials(args.trials)
    seed = validate_seed(args.seed)
    x = fractional_from_dict(read_json(args.x), catalog)
    problems = x.check(catalog)
    if problems:
        raise ValidationError(f"invalid fractional solution: {problems[0]}")

    jobs = args.jobs or _env_int("RTV_JOBS", 1)
    stats = run_trials(x, catalog, RoundingMethod(args.method), trials, seed, jobs)
    write_json(stats_to_dict(stats, catalog), args.out)
    print(
        f"method={args.method} trials={trials} mean_cost={stats.mean_cost:.12g} "
        f"unassigned_fraction={stats.unassigned_fraction_mean:.6f}"
    )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_simulation_config(args.config)
    if config.tripgen_timeout is None:
        config = replace(config, tripgen_timeout=_env_float("RTV_TRIPGEN_TIMEOUT"))
    jobs = args.jobs or _env_int("RTV_JOBS", 1)
    out = Path(args.out)

    with ThreadPoolExecutor(max_workers=max(jobs, 1)) as executor:
        reports = list(executor.map(lambda s: run_simulation(config, s), config.seeds))

    aggregates = []
    for report in reports:
        write_round_csv(report.rows, out / f"rounds_seed{report.seed}.csv")
        aggregates.append(report.aggregate)
    write_aggregate({"replications": aggregates}, out / "aggregate.json")
    print(f"wrote {len(reports)} replications to {out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run a command and map failures to exit codes.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Process exit code
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    if args.log_level:
        set_log_level(args.log_level)

    logger.info(f"Command started - {args.command}")
    try:
        code = args.handler(args)
        logger.info(f"Command completed - {args.command}")
        return code

    except ValidationError as e:
        logger.warning(f"Validation error: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    except InfeasibleProblem as e:
        logger.warning(f"Infeasible: {str(e)}")
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE

    except SolveTimeLimit as e:
        logger.warning(f"Time limit: {str(e)}")
        print(f"time limit: {e}", file=sys.stderr)
        return EXIT_TIME_LIMIT

    except NumericalFailure as e:
        logger.error(f"Numerical failure: {str(e)}")
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    except OSError as e:
        logger.error(f"I/O error: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO

    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}")
        logger.error(traceback.format_exc())
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
