"""
Benchmark instances, metrics and the batch experiment runner.

Instances are generated so that every agent's ideal (collision-ignoring)
trajectory conflicts with some earlier agent's, making the whole instance
one collision cluster. Runs are scored by suboptimality against the
idealistic cost, success under suboptimality thresholds and per-instance
ranks.
"""

import csv
import json
import logging
import math
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import BenchmarkConfig
from .environment_resolver import load_environment
from .exceptions import GenerationTimeoutError, NoPathError
from .files import instance_from_document, instance_to_document
from .geom import Environment, Point, disc_free
from .orca import SimParams, simulate
from .planner import ExtensionKind, Planner, PlannerParams
from .traj import AgentSpec, ProblemInstance, Solution, check_cf, closest_approach
from .visnav import GraphCache, to_trajectory

logger = logging.getLogger(__name__)

BENCHMARK_ENVIRONMENTS = ("empty", "door", "cross", "maze")
GENERATION_ATTEMPTS = 10**5

RESULT_FIELDS = (
    "instance_id",
    "env",
    "n_agents",
    "radius",
    "algorithm",
    "seed",
    "solved",
    "best_cost",
    "ideal_cost",
    "suboptimality",
    "wall_ms",
    "iterations",
    "emissions_json",
    "error",
)


class Algorithm(Enum):
    ORCA = "orca"
    LINE_RRT = "line-rrt"
    VG_RRT = "vg-rrt"
    ORCA_RRT = "orca-rrt"

    @property
    def extension(self) -> Optional[ExtensionKind]:
        return {
            Algorithm.LINE_RRT: ExtensionKind.LINE,
            Algorithm.VG_RRT: ExtensionKind.VISIBILITY_GRAPH,
            Algorithm.ORCA_RRT: ExtensionKind.ORCA,
        }.get(self)

    @property
    def stochastic(self) -> bool:
        return self is not Algorithm.ORCA


@dataclass(frozen=True)
class EnvironmentSpec:
    """A named benchmark environment."""

    name: str
    environment: Environment

    @classmethod
    def load(cls, name: str) -> "EnvironmentSpec":
        return cls(name, load_environment(name))

    @property
    def polygons(self):
        return self.environment.obstacles

    @property
    def boundary(self):
        return self.environment.boundary


def _random_position(rng: np.random.Generator, env: Environment, r: float) -> Point:
    b = env.boundary
    return Point(
        float(rng.uniform(b.xmin + r, b.xmax - r)), float(rng.uniform(b.ymin + r, b.ymax - r))
    )


def generate_instance(
    env,
    n: int,
    r: float,
    rng: np.random.Generator,
    graphs: Optional[GraphCache] = None,
    max_attempts: int = GENERATION_ATTEMPTS,
) -> ProblemInstance:
    """
    Generate an instance forming a single collision cluster.

    Agents are placed one at a time. A candidate start/goal pair must be
    disc-free, clear of every earlier start and goal and connected by a
    shortest path; from the second agent on, its ideal unit-speed
    trajectory must also come within ``2r`` of some earlier agent's ideal
    trajectory at the same time.

    Raises:
        ValueError: If n < 2 or r <= 0
        GenerationTimeoutError: If an agent cannot be placed within
            ``max_attempts`` attempts
    """
    if n < 2:
        raise ValueError(f"instances need at least 2 agents, got {n}")
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    env = env.environment if isinstance(env, EnvironmentSpec) else env
    graph = (graphs or GraphCache(env)).get(r)

    agents: List[AgentSpec] = []
    ideal = []
    for k in range(n):
        for _ in range(max_attempts):
            start = _random_position(rng, env, r)
            goal = _random_position(rng, env, r)
            if not (disc_free(start, r, env) and disc_free(goal, r, env)):
                continue
            if any(
                math.dist(start, a.start) <= 2 * r or math.dist(goal, a.goal) <= 2 * r
                for a in agents
            ):
                continue
            path = graph.shortest_path(start, goal)
            if path is None:
                continue
            trajectory = to_trajectory(path, 1.0)
            if k > 0 and not any(
                closest_approach(trajectory, other)[0] <= 2 * r for other in ideal
            ):
                continue
            agents.append(AgentSpec(start, goal, r))
            ideal.append(trajectory)
            break
        else:
            raise GenerationTimeoutError(env.name, n, r, k)
    return ProblemInstance(env, tuple(agents))


def idealistic_cost(inst: ProblemInstance, graphs: Optional[GraphCache] = None) -> float:
    """
    Summed single-agent optimal travel times, ignoring the other agents.

    Raises:
        NoPathError: If some agent cannot reach its goal at all
    """
    graphs = graphs or GraphCache(inst.env)
    total = 0.0
    for i, agent in enumerate(inst.agents):
        path = graphs.get(agent.radius).shortest_path(agent.start, agent.goal)
        if path is None:
            raise NoPathError(i, agent.start, agent.goal)
        total += path.length / agent.max_speed
    return total


def suboptimality(cost: float, ideal: float) -> float:
    if ideal == 0.0:
        return 1.0 if cost == 0.0 else math.inf
    return cost / ideal


@dataclass(frozen=True)
class RunRecord:
    instance_id: str
    env: str
    n_agents: int
    radius: float
    algorithm: str
    seed: int
    best_cost: Optional[float]
    ideal_cost: float
    suboptimality: Optional[float]
    wall_ms: float = 0.0
    iterations: int = 0
    emissions: Tuple[Tuple[float, int, float], ...] = ()
    error: str = ""

    @property
    def solved(self) -> bool:
        return self.best_cost is not None

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.instance_id, self.algorithm, self.seed)

    def to_row(self) -> Dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "env": self.env,
            "n_agents": self.n_agents,
            "radius": repr(float(self.radius)),
            "algorithm": self.algorithm,
            "seed": self.seed,
            "solved": int(self.solved),
            "best_cost": "" if self.best_cost is None else repr(self.best_cost),
            "ideal_cost": repr(self.ideal_cost),
            "suboptimality": "" if self.suboptimality is None else repr(self.suboptimality),
            "wall_ms": f"{self.wall_ms:.1f}",
            "iterations": self.iterations,
            "emissions_json": json.dumps([list(e) for e in self.emissions]),
            "error": self.error,
        }

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "RunRecord":
        def optional(value):
            return float(value) if value not in ("", None) else None

        return cls(
            instance_id=row["instance_id"],
            env=row["env"],
            n_agents=int(row["n_agents"]),
            radius=float(row["radius"]),
            algorithm=row["algorithm"],
            seed=int(row["seed"]),
            best_cost=optional(row["best_cost"]),
            ideal_cost=float(row["ideal_cost"]),
            suboptimality=optional(row["suboptimality"]),
            wall_ms=float(row["wall_ms"]),
            iterations=int(row["iterations"]),
            emissions=tuple(_emission(e) for e in json.loads(row["emissions_json"] or "[]")),
            error=row.get("error") or "",
        )


def _emission(values) -> Tuple[float, int, float]:
    # Rows written before emissions carried the iteration hold (elapsed, cost).
    if len(values) == 2:
        return (float(values[0]), 0, float(values[1]))
    elapsed, iteration, cost = values
    return (float(elapsed), int(iteration), float(cost))


def at_cutoff(rec: RunRecord, cutoff: Optional[float]) -> RunRecord:
    """
    The record as it stood ``cutoff`` seconds into the run.

    The best cost becomes the last one emitted by then; a run with nothing
    emitted by then counts as unsolved. ``cutoff=None`` returns ``rec``.
    """
    if cutoff is None or rec.best_cost is None:
        return rec
    costs = [cost for elapsed, _, cost in rec.emissions if elapsed <= cutoff]
    if not costs:
        return replace(rec, best_cost=None, suboptimality=None)
    best = min(costs)
    return replace(rec, best_cost=best, suboptimality=suboptimality(best, rec.ideal_cost))


def success(rec: RunRecord, threshold: Optional[float]) -> bool:
    """Solved, and below the suboptimality threshold when one is given."""
    if rec.best_cost is None or rec.suboptimality is None:
        return False
    return threshold is None or rec.suboptimality < threshold


def rank_table(
    records: Sequence[RunRecord], rng: np.random.Generator, cutoff: Optional[float] = None
) -> Dict[str, int]:
    """
    Rank competing runs on one instance by suboptimality.

    Exact ties are put in a uniformly random order. Every unsolved run gets
    the worst rank, the number of competitors. With ``cutoff`` each run is
    judged by its best solution emitted within that many seconds.
    """
    records = [at_cutoff(rec, cutoff) for rec in records]
    worst = len(records)
    ranks: Dict[str, int] = {}
    solved = sorted((r for r in records if r.solved), key=lambda r: r.suboptimality)
    position = 1
    k = 0
    while k < len(solved):
        group = [solved[k]]
        while k + len(group) < len(solved) and solved[k + len(group)].suboptimality == group[0].suboptimality:
            group.append(solved[k + len(group)])
        for offset in rng.permutation(len(group)):
            ranks[group[offset].algorithm] = position
            position += 1
        k += len(group)
    for rec in records:
        if not rec.solved:
            ranks[rec.algorithm] = worst
    return ranks


@dataclass(frozen=True)
class RunResult:
    solution: Optional[Solution]
    emissions: Tuple[Tuple[float, int, float], ...]
    wall_ms: float
    iterations: int


def run_single(
    inst: ProblemInstance,
    algorithm: Algorithm,
    seed: int = 0,
    budget: Optional[float] = None,
    iterations: Optional[int] = None,
    sim_params: SimParams = SimParams(),
    planner_params: PlannerParams = PlannerParams(),
    graphs: Optional[GraphCache] = None,
) -> RunResult:
    """
    Run one algorithm on one instance.

    ORCA is a single simulation from the starts to the goals, bounded by
    ``budget`` when given; the RRT* algorithms keep their last emission.
    """
    graphs = graphs or GraphCache(inst.env, planner_params.corner_points)
    started = time.perf_counter()
    if algorithm is Algorithm.ORCA:
        deadline = started + budget if budget is not None else None
        outcome = simulate(inst, inst.starts, inst.goals, sim_params, graphs, deadline)
        wall_ms = 1000.0 * (time.perf_counter() - started)
        if not outcome.reached:
            return RunResult(None, (), wall_ms, outcome.steps)
        solution = Solution.from_trajectories(outcome.trajectories)
        return RunResult(solution, ((wall_ms / 1000.0, 1, solution.cost),), wall_ms, outcome.steps)

    planner = Planner(inst, algorithm.extension, planner_params, sim_params, graphs, seed)
    best = None
    emissions = []
    for emission in planner.plan(budget=budget, iterations=iterations):
        best = emission.solution
        emissions.append((emission.elapsed, emission.iteration, emission.solution.cost))
    wall_ms = 1000.0 * (time.perf_counter() - started)
    return RunResult(best, tuple(emissions), wall_ms, planner.iterations)


@dataclass(frozen=True)
class RunTask:
    instance_id: str
    env: str
    n_agents: int
    radius: float
    algorithm: str
    seed: int
    instance: Dict[str, Any]
    ideal_cost: float
    budget: Optional[float]
    iterations: Optional[int]
    sim: Dict[str, Any] = field(default_factory=dict)
    planner: Dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.instance_id, self.algorithm, self.seed)


_worker_graphs: Dict[str, GraphCache] = {}


def _graphs_for(env: Environment, corner_points: int) -> GraphCache:
    key = f"{env.geometry_hash()}:{corner_points}"
    if key not in _worker_graphs:
        _worker_graphs[key] = GraphCache(env, corner_points)
    return _worker_graphs[key]


def execute_task(task: RunTask) -> RunRecord:
    """
    Run one task and re-validate its solution; never raises.
    """
    base = dict(
        instance_id=task.instance_id,
        env=task.env,
        n_agents=task.n_agents,
        radius=task.radius,
        algorithm=task.algorithm,
        seed=task.seed,
        ideal_cost=task.ideal_cost,
    )
    try:
        inst, _ = instance_from_document(task.instance)
        planner_params = PlannerParams.from_mapping(task.planner)
        result = run_single(
            inst,
            Algorithm(task.algorithm),
            seed=task.seed,
            budget=task.budget,
            iterations=task.iterations,
            sim_params=SimParams.from_mapping(task.sim),
            planner_params=planner_params,
            graphs=_graphs_for(inst.env, planner_params.corner_points),
        )
    except Exception as e:  # recorded, the batch goes on
        logger.warning("Run %s failed: %s", task.key, e)
        return RunRecord(best_cost=None, suboptimality=None, error=f"{type(e).__name__}: {e}", **base)

    if result.solution is not None and not check_cf(result.solution.trajectories, inst):
        logger.warning("Run %s produced an invalid solution; counted as unsolved", task.key)
        return RunRecord(
            best_cost=None,
            suboptimality=None,
            wall_ms=result.wall_ms,
            iterations=result.iterations,
            error="invalid solution",
            **base,
        )
    cost = result.solution.cost if result.solution is not None else None
    return RunRecord(
        best_cost=cost,
        suboptimality=None if cost is None else suboptimality(cost, task.ideal_cost),
        wall_ms=result.wall_ms,
        iterations=result.iterations,
        emissions=result.emissions,
        **base,
    )


def instance_seed(config_seed: int, env_index: int, n: int, r: float, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config_seed, env_index, n, int(round(r * 1000)), index])


def instance_id(env: str, n: int, r: float, index: int) -> str:
    return f"{env}-n{n}-r{r:g}-i{index}"


@dataclass(frozen=True)
class GeneratedInstance:
    instance_id: str
    env: str
    n_agents: int
    radius: float
    instance: ProblemInstance
    ideal_cost: float


def generate_instances(config: BenchmarkConfig):
    """
    Generate every instance of the sweep.

    Returns:
        tuple: (list of GeneratedInstance, list of ungeneratable
            (env, n, r) cells)
    """
    generated: List[GeneratedInstance] = []
    ungeneratable: List[Tuple[str, int, float]] = []
    for env_index, env_name in enumerate(config.environments):
        env = load_environment(env_name)
        graphs = GraphCache(env, config.planner_params().corner_points)
        for n in config.agent_counts:
            for r in config.radii:
                for index in range(config.instances_per_cell):
                    rng = np.random.default_rng(instance_seed(config.seed, env_index, n, r, index))
                    try:
                        inst = generate_instance(env, n, r, rng, graphs)
                    except GenerationTimeoutError as e:
                        logger.warning("Skipping ungeneratable cell: %s", e)
                        ungeneratable.append((env_name, n, float(r)))
                        break
                    generated.append(
                        GeneratedInstance(
                            instance_id(env_name, n, r, index),
                            env_name,
                            n,
                            float(r),
                            inst,
                            idealistic_cost(inst, graphs),
                        )
                    )
    return generated, ungeneratable


def build_tasks(config: BenchmarkConfig, generated: Iterable[GeneratedInstance]) -> List[RunTask]:
    tasks = []
    for item in generated:
        document = instance_to_document(item.instance, {"instance_id": item.instance_id})
        for algorithm in config.algorithms:
            seeds = range(config.seeds_per_instance) if Algorithm(algorithm).stochastic else [0]
            for seed in seeds:
                tasks.append(
                    RunTask(
                        item.instance_id,
                        item.env,
                        item.n_agents,
                        item.radius,
                        algorithm,
                        seed,
                        document,
                        item.ideal_cost,
                        config.budget,
                        config.iterations,
                        dict(config.sim),
                        dict(config.planner),
                    )
                )
    return tasks


def _header_comment(config: BenchmarkConfig) -> str:
    scenarios, runs = config.cardinality()
    return (
        f"# orca-rrt results: {scenarios} scenarios, {runs} runs; orca runs once per "
        f"instance with seed 0, each RRT* algorithm runs seeds 0..{config.seeds_per_instance - 1}"
    )


def read_results(csv_path) -> List[RunRecord]:
    """Records of a results CSV, skipping '#' comment lines; [] if missing."""
    if not os.path.exists(csv_path):
        return []
    with open(csv_path, newline="", encoding="utf-8") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return [RunRecord.from_row(row) for row in csv.DictReader(lines)]


def write_results(csv_path, records: Iterable[RunRecord], comment: str = "") -> None:
    path = Path(csv_path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as handle:
        if comment:
            handle.write(comment + "\n")
        writer = csv.DictWriter(handle, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.to_row())
    os.replace(tmp, path)


def _append_result(csv_path, rec: RunRecord, comment: str) -> None:
    fresh = not os.path.exists(csv_path)
    with open(csv_path, "a", newline="", encoding="utf-8") as handle:
        if fresh:
            handle.write(comment + "\n")
        writer = csv.DictWriter(handle, fieldnames=RESULT_FIELDS)
        if fresh:
            writer.writeheader()
        writer.writerow(rec.to_row())


def success_rates(
    records: Sequence[RunRecord], thresholds: Sequence[Optional[float]]
) -> List[Dict[str, Any]]:
    """Success rate per (env, algorithm, threshold, n_agents, radius)."""
    cells: Dict[Tuple[str, str, int, float], List[RunRecord]] = defaultdict(list)
    for rec in records:
        cells[(rec.env, rec.algorithm, rec.n_agents, rec.radius)].append(rec)
    rows = []
    for (env, algorithm, n, r), group in sorted(cells.items()):
        for threshold in thresholds:
            successes = sum(success(rec, threshold) for rec in group)
            rows.append(
                {
                    "env": env,
                    "algorithm": algorithm,
                    "threshold": "none" if threshold is None else repr(float(threshold)),
                    "n_agents": n,
                    "radius": repr(float(r)),
                    "runs": len(group),
                    "successes": successes,
                    "rate": f"{successes / len(group):.6f}",
                }
            )
    return rows


def rank_histograms(
    records: Sequence[RunRecord], seed: int = 0, cutoffs: Sequence[Optional[float]] = (None,)
) -> List[Dict[str, Any]]:
    """
    Count how often each algorithm takes each rank, per environment and
    time cutoff.

    Runs compete per (instance, seed); the deterministic ORCA run takes
    part in every seed's ranking. A cutoff of None ranks the final results.
    """
    rows = []
    for cutoff in cutoffs:
        rows.extend(_rank_counts(records, np.random.default_rng(seed), cutoff))
    return rows


def _rank_counts(records, rng, cutoff) -> List[Dict[str, Any]]:
    label = "none" if cutoff is None else repr(float(cutoff))
    by_instance: Dict[str, List[RunRecord]] = defaultdict(list)
    for rec in records:
        by_instance[rec.instance_id].append(rec)
    counts: Counter = Counter()
    algorithms = set()
    for instance_key in sorted(by_instance):
        group = by_instance[instance_key]
        orca = [rec for rec in group if rec.algorithm == Algorithm.ORCA.value]
        seeds = sorted({rec.seed for rec in group if rec.algorithm != Algorithm.ORCA.value}) or [0]
        for s in seeds:
            competitors = orca + [
                rec for rec in group if rec.algorithm != Algorithm.ORCA.value and rec.seed == s
            ]
            for algorithm, rank in sorted(rank_table(competitors, rng, cutoff).items()):
                counts[(group[0].env, algorithm, rank)] += 1
                algorithms.add((group[0].env, algorithm))
    rows = []
    for env, algorithm in sorted(algorithms):
        ranks_here = [rank for (e, a, rank) in counts if (e, a) == (env, algorithm)]
        for rank in range(1, max(ranks_here) + 1):
            rows.append(
                {
                    "env": env,
                    "algorithm": algorithm,
                    "cutoff": label,
                    "rank": rank,
                    "count": counts[(env, algorithm, rank)],
                }
            )
    return rows


def _write_table(path, rows: Sequence[Dict[str, Any]], fields: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(fields))
        writer.writeheader()
        writer.writerows(rows)


@dataclass(frozen=True)
class BatchResult:
    records: Tuple[RunRecord, ...]
    success_rates: Tuple[Dict[str, Any], ...]
    rank_histograms: Tuple[Dict[str, Any], ...]
    ungeneratable: Tuple[Tuple[str, int, float], ...]


def run_batch(
    config: BenchmarkConfig, out_dir=None, resume: bool = True, limit: Optional[int] = None
) -> BatchResult:
    """
    Run a benchmark sweep.

    With ``out_dir`` every finished run is appended to ``results.csv`` as it
    completes, runs already present are skipped when ``resume`` is set, and
    the final CSV is rewritten in task order next to ``success_rates.csv``
    and ``rank_histograms.csv``. ``limit`` stops after that many new runs,
    leaving a resumable partial CSV.
    """
    generated, ungeneratable = generate_instances(config)
    tasks = build_tasks(config, generated)
    comment = _header_comment(config)
    csv_path = None
    done: Dict[Tuple[str, str, int], RunRecord] = {}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        csv_path = Path(out_dir) / "results.csv"
        if resume:
            done = {rec.key: rec for rec in read_results(csv_path)}
        elif csv_path.exists():
            csv_path.unlink()
    pending = [task for task in tasks if task.key not in done]
    if limit is not None:
        pending = pending[:limit]
    logger.info(
        "Benchmark: %d tasks, %d already done, %d to run", len(tasks), len(done), len(pending)
    )

    def finished(rec: RunRecord) -> None:
        done[rec.key] = rec
        if csv_path is not None:
            _append_result(csv_path, rec, comment)
        logger.info("Finished %s (%d/%d)", rec.key, len(done), len(tasks))

    if config.workers <= 1 or len(pending) <= 1:
        for task in pending:
            finished(execute_task(task))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            futures = [executor.submit(execute_task, task) for task in pending]
            for future in as_completed(futures):
                finished(future.result())

    order = {task.key: k for k, task in enumerate(tasks)}
    records = tuple(
        sorted((rec for key, rec in done.items() if key in order), key=lambda rec: order[rec.key])
    )
    rates = success_rates(records, config.thresholds)
    histograms = rank_histograms(records, config.seed, (None,) + config.rank_cutoffs)
    if csv_path is not None:
        write_results(csv_path, records, comment)
        _write_table(
            Path(out_dir) / "success_rates.csv",
            rates,
            ("env", "algorithm", "threshold", "n_agents", "radius", "runs", "successes", "rate"),
        )
        _write_table(
            Path(out_dir) / "rank_histograms.csv",
            histograms,
            ("env", "algorithm", "cutoff", "rank", "count"),
        )
    return BatchResult(records, tuple(rates), tuple(histograms), tuple(ungeneratable))
