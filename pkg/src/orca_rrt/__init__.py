"""
orca-rrt

Collision-free coordinated trajectories for disc-shaped holonomic agents
among polygonal obstacles. Provides a multi-agent RRT* over the joint
configuration space with three steering extensions (straight lines,
visibility-graph paths and ORCA simulations), a standalone ORCA simulator
and a benchmark suite scoring them against each other.
"""

__version__ = "0.1.0"

from .bench import (
    Algorithm,
    BenchmarkConfig,
    EnvironmentSpec,
    RunRecord,
    generate_instance,
    idealistic_cost,
    rank_table,
    run_batch,
    run_single,
    success,
)
from .environment_resolver import get_available_environments, load_environment, resolve_environment
from .exceptions import (
    FileLoadError,
    GenerationTimeoutError,
    GeometryError,
    InstanceError,
    NoPathError,
    SamplingStarvationError,
    TreeConsistencyError,
)
from .files import dump_instance, dump_solution, load_instance, load_solution
from .geom import Environment, Point, Polygon, Rect, disc_free, dist_point_segment, swept_disc_free
from .orca import HalfPlane, SimOutcome, SimParams, SimStatus, agent_halfplane, obstacle_halfplanes, simulate, solve_velocity
from .planner import (
    Emission,
    ExtensionKind,
    JointState,
    Planner,
    PlannerParams,
    PlanTree,
    extend,
    joint_dist,
    near,
    nearest,
    plan,
    sample,
)
from .render import render_svg
from .traj import (
    AgentSpec,
    ProblemInstance,
    Solution,
    Trajectory,
    check_cf,
    evaluate,
    min_separation,
    validate_solution,
)
from .visnav import GraphCache, PathPolyline, VisibilityGraph, build, shortest_path, to_trajectory

__all__ = [
    "Point",
    "Polygon",
    "Rect",
    "Environment",
    "dist_point_segment",
    "disc_free",
    "swept_disc_free",
    "AgentSpec",
    "ProblemInstance",
    "Trajectory",
    "Solution",
    "evaluate",
    "min_separation",
    "check_cf",
    "validate_solution",
    "VisibilityGraph",
    "PathPolyline",
    "GraphCache",
    "build",
    "shortest_path",
    "to_trajectory",
    "HalfPlane",
    "SimParams",
    "SimStatus",
    "SimOutcome",
    "agent_halfplane",
    "obstacle_halfplanes",
    "solve_velocity",
    "simulate",
    "ExtensionKind",
    "JointState",
    "PlanTree",
    "PlannerParams",
    "Planner",
    "Emission",
    "joint_dist",
    "sample",
    "nearest",
    "near",
    "extend",
    "plan",
    "Algorithm",
    "BenchmarkConfig",
    "EnvironmentSpec",
    "RunRecord",
    "generate_instance",
    "idealistic_cost",
    "success",
    "rank_table",
    "run_single",
    "run_batch",
    "load_instance",
    "dump_instance",
    "load_solution",
    "dump_solution",
    "render_svg",
    "get_available_environments",
    "resolve_environment",
    "load_environment",
    "FileLoadError",
    "GeometryError",
    "InstanceError",
    "NoPathError",
    "SamplingStarvationError",
    "GenerationTimeoutError",
    "TreeConsistencyError",
]
