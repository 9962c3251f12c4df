#!/usr/bin/env python3
"""
Command-line interface for orca-rrt.

Exit codes: 0 solved or valid, 2 unsolved or invalid solution, 3 invalid
input, 4 internal error.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    Algorithm,
    generate_instance,
    idealistic_cost,
    run_batch,
    run_single,
    suboptimality,
)
from .config import BenchmarkConfig
from .environment_resolver import format_available_environments, get_available_environments, load_environment
from .exceptions import FileLoadError, GenerationTimeoutError, GeometryError, InstanceError, NoPathError
from .files import dump_instance, dump_solution, load_instance, load_solution
from .orca import SimParams
from .planner import PlannerParams
from .render import write_svg
from .traj import validate_solution
from .visnav import GraphCache

try:
    import yaml
except ImportError as e:
    raise ImportError(
        "PyYAML is required for the command-line interface. Install with: pip install PyYAML"
    ) from e

EXIT_OK = 0
EXIT_UNSOLVED = 2
EXIT_INVALID_INPUT = 3
EXIT_INTERNAL = 4

logger = logging.getLogger(__name__)


def _add_sim_arguments(parser):
    group = parser.add_argument_group("ORCA simulation")
    group.add_argument("--dt", type=float, help="Integration step in seconds (default: 0.25)")
    group.add_argument("--tau-agent", type=float, help="Agent avoidance horizon in seconds (default: 10)")
    group.add_argument("--tau-obstacle", type=float, help="Obstacle avoidance horizon in seconds (default: 5)")
    group.add_argument("--arrive-eps", type=float, help="Goal snap distance (default: 1.0)")
    group.add_argument("--max-steps", type=int, help="Step bound per simulation (default: 10x ideal makespan)")
    group.add_argument(
        "--config",
        help="YAML file with 'sim' and 'planner' mappings; flags take precedence",
    )


def _load_params(args):
    sim, planner = {}, {}
    if args.config:
        if not Path(args.config).exists():
            raise FileLoadError(f"File '{args.config}' does not exist.")
        try:
            with open(args.config, encoding="utf-8") as handle:
                data = yaml.safe_load(handle) or {}
        except yaml.YAMLError as e:
            raise FileLoadError(f"Error parsing YAML file '{args.config}': {str(e)}") from e
        if not isinstance(data, dict):
            raise FileLoadError(f"Invalid YAML format in '{args.config}': expected dictionary")
        sim.update(data.get("sim") or {})
        planner.update(data.get("planner") or {})
    flags = {
        "dt": args.dt,
        "tau_agent": args.tau_agent,
        "tau_obstacle": args.tau_obstacle,
        "arrive_eps": args.arrive_eps,
        "max_steps": args.max_steps,
    }
    sim.update({k: v for k, v in flags.items() if v is not None})
    try:
        return SimParams.from_mapping(sim), PlannerParams.from_mapping(planner)
    except (TypeError, ValueError) as e:
        raise FileLoadError(f"Invalid parameters: {str(e)}") from e


def cmd_gen(args) -> int:
    env = load_environment(args.env)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    graphs = GraphCache(env)
    for k in range(args.count):
        try:
            inst = generate_instance(env, args.n, args.radius, rng, graphs)
        except GenerationTimeoutError as e:
            print(f"Ungeneratable: {e}", file=sys.stderr)
            return EXIT_UNSOLVED
        path = out_dir / f"{env.name}-n{args.n}-r{args.radius:g}-s{args.seed}-{k:03d}.json"
        dump_instance(inst, path, {"generator_seed": args.seed, "index": k})
        print(path)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst, _ = load_instance(args.instance)
    sim_params, planner_params = _load_params(args)
    sim_params.check_instance(inst)
    algorithm = Algorithm(args.algorithm)
    budget = None if args.iterations is not None else args.budget
    graphs = GraphCache(inst.env, planner_params.corner_points)
    ideal = idealistic_cost(inst, graphs)
    result = run_single(
        inst,
        algorithm,
        seed=args.seed,
        budget=budget,
        iterations=args.iterations,
        sim_params=sim_params,
        planner_params=planner_params,
        graphs=graphs,
    )
    if result.solution is None:
        print(f"unsolved: {algorithm.value} found no solution ({result.iterations} iterations)")
        return EXIT_UNSOLVED

    ratio = suboptimality(result.solution.cost, ideal)
    if args.out:
        dump_solution(
            result.solution,
            args.out,
            algorithm.value,
            seed=args.seed,
            emissions=[
                {"elapsed": t, "iteration": k, "cost": c} for t, k, c in result.emissions
            ],
            instance_ref={"path": str(args.instance), "env_hash": inst.env.geometry_hash()},
        )
    print(
        f"solved: cost {result.solution.cost:.3f}, ideal {ideal:.3f}, "
        f"suboptimality {ratio:.4f} ({result.iterations} iterations, {result.wall_ms:.0f} ms)"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    config = BenchmarkConfig.from_file(args.config_file)
    if args.workers is not None:
        config = dataclasses.replace(config, workers=args.workers)
    if args.rank_cutoffs:
        config = dataclasses.replace(config, rank_cutoffs=tuple(args.rank_cutoffs))
    scenarios, runs = config.cardinality()
    print(f"{scenarios} scenarios, {runs} runs -> {args.out_dir}")
    result = run_batch(config, args.out_dir, resume=not args.no_resume, limit=args.limit)
    solved = sum(rec.solved for rec in result.records)
    print(f"{len(result.records)} runs recorded, {solved} solved")
    for env, n, r in result.ungeneratable:
        print(f"ungeneratable: {env} n={n} r={r:g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    inst, _ = load_instance(args.instance)
    solution, _ = load_solution(args.solution)
    report = validate_solution(solution.trajectories, inst, margin=args.margin)
    print(report.describe())
    return EXIT_OK if report.ok else EXIT_UNSOLVED


def cmd_render(args) -> int:
    inst, _ = load_instance(args.instance)
    solution = load_solution(args.solution)[0] if args.solution else None
    write_svg(inst, args.out, solution)
    print(args.out)
    return EXIT_OK


def cmd_envs(args) -> int:
    for name in get_available_environments():
        env = load_environment(name)
        print(f"{name}\t{len(env.obstacles)} obstacles\t{env.geometry_hash()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Multi-agent path planning with ORCA and RRT*",
        prog="orca-rrt",
        epilog=format_available_environments(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug output to stderr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate benchmark instances")
    gen.add_argument("env", help="Environment identifier or path to YAML file")
    gen.add_argument("n", type=int, help="Number of agents")
    gen.add_argument("radius", type=float, help="Agent radius")
    gen.add_argument("--count", type=int, default=1, help="Instances to generate (default: 1)")
    gen.add_argument("--seed", type=int, default=0, help="Generator seed (default: 0)")
    gen.add_argument("--out-dir", default=".", help="Output directory (default: .)")
    gen.set_defaults(handler=cmd_gen)

    solve = sub.add_parser("solve", help="Solve one instance file")
    solve.add_argument("instance", help="Instance JSON file")
    solve.add_argument(
        "-a",
        "--algorithm",
        choices=[a.value for a in Algorithm],
        default=Algorithm.ORCA_RRT.value,
        help="Algorithm (default: orca-rrt)",
    )
    limits = solve.add_mutually_exclusive_group()
    limits.add_argument("--budget", type=float, default=5.0, help="Wall-clock seconds (default: 5)")
    limits.add_argument("--iterations", type=int, help="RRT* iterations instead of a time budget")
    solve.add_argument("--seed", type=int, default=0, help="Planner seed (default: 0)")
    solve.add_argument("-o", "--out", help="Write the best solution to this JSON file")
    _add_sim_arguments(solve)
    solve.set_defaults(handler=cmd_solve)

    bench = sub.add_parser("bench", help="Run a benchmark config")
    bench.add_argument("config_file", help="Benchmark YAML config")
    bench.add_argument("--out-dir", default="results", help="Output directory (default: results)")
    bench.add_argument("--workers", type=int, help="Override the config's worker count")
    bench.add_argument("--no-resume", action="store_true", help="Discard existing results")
    bench.add_argument("--limit", type=int, help="Stop after this many new runs")
    bench.add_argument(
        "--rank-cutoffs",
        type=float,
        nargs="+",
        metavar="SECONDS",
        help="Also rank the results as they stood at these times into each run",
    )
    bench.set_defaults(handler=cmd_bench)

    validate = sub.add_parser("validate", help="Check a solution against an instance")
    validate.add_argument("instance", help="Instance JSON file")
    validate.add_argument("solution", help="Solution JSON file")
    validate.add_argument(
        "--margin",
        type=float,
        default=0.0,
        help="Extra separation required between agents and from obstacles (default: 0)",
    )
    validate.set_defaults(handler=cmd_validate)

    render = sub.add_parser("render", help="Render an instance (and solution) to SVG")
    render.add_argument("instance", help="Instance JSON file")
    render.add_argument("--solution", help="Solution JSON file")
    render.add_argument("-o", "--out", default="out.svg", help="SVG output path (default: out.svg)")
    render.set_defaults(handler=cmd_render)

    envs = sub.add_parser("envs", help="List built-in environments")
    envs.set_defaults(handler=cmd_envs)
    return parser


def main(argv=None) -> int:
    """Main CLI function."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except (FileLoadError, InstanceError, GeometryError, NoPathError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except Exception as e:
        logger.debug("Internal error", exc_info=True)
        print(f"Internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
