"""
Loading and saving environments, problem instances and solutions.

Environments are YAML documents; instances and solutions are written as
deterministic JSON (sorted keys, two-space indent) and read back with the
YAML loader, which accepts both.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from .environment_resolver import load_environment
from .exceptions import FileLoadError, GeometryError, InstanceError
from .geom import Environment, Polygon, Rect
from .traj import AgentSpec, ProblemInstance, Solution, Trajectory

try:
    import yaml
except ImportError as e:
    raise ImportError(
        "PyYAML is required for file loading. Install with: pip install PyYAML"
    ) from e

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _read_document(file_path) -> Dict[str, Any]:
    if not os.path.exists(file_path):
        raise FileLoadError(f"File '{file_path}' does not exist.")
    try:
        with open(file_path, encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except yaml.YAMLError as e:
        raise FileLoadError(f"Error parsing file '{file_path}': {str(e)}") from e
    except OSError as e:
        raise FileLoadError(f"Error reading file '{file_path}': {str(e)}") from e
    if not isinstance(data, dict):
        raise FileLoadError(f"Invalid format in '{file_path}': expected a mapping")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise FileLoadError(
            f"Unsupported schema_version {version!r} in '{file_path}' "
            f"(expected {SCHEMA_VERSION})"
        )
    return data


def _write_document(document: Dict[str, Any], file_path) -> None:
    path = Path(file_path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def environment_from_mapping(data: Dict[str, Any], name: str = "custom") -> Environment:
    """
    Build an environment from ``boundary: [xmin, ymin, xmax, ymax]`` and
    ``obstacles: [[[x, y], ...], ...]``.

    Raises:
        FileLoadError: If a key is missing or malformed
        GeometryError: If the geometry violates the environment invariants
    """
    try:
        xmin, ymin, xmax, ymax = (float(v) for v in data["boundary"])
        obstacles = [
            Polygon(tuple((float(x), float(y)) for x, y in vertices))
            for vertices in data.get("obstacles") or []
        ]
    except KeyError as e:
        raise FileLoadError(f"Environment is missing the {e} key") from e
    except (TypeError, ValueError) as e:
        raise FileLoadError(f"Malformed environment geometry: {str(e)}") from e
    return Environment(Rect(xmin, ymin, xmax, ymax), tuple(obstacles), name=data.get("name", name))


def environment_to_mapping(env: Environment) -> Dict[str, Any]:
    b = env.boundary
    return {
        "name": env.name,
        "boundary": [b.xmin, b.ymin, b.xmax, b.ymax],
        "obstacles": [[[v.x, v.y] for v in poly.vertices] for poly in env.obstacles],
    }


def load_environment_file(file_path) -> Environment:
    """
    Load an environment YAML file (``metadata``, ``boundary``, ``obstacles``).

    Raises:
        FileLoadError: If the file is missing, unparsable or malformed
    """
    data = _read_document(file_path)
    try:
        return environment_from_mapping(data, name=Path(file_path).stem)
    except GeometryError as e:
        raise FileLoadError(f"Invalid environment in '{file_path}': {str(e)}") from e


def instance_from_document(data: Dict[str, Any]) -> Tuple[ProblemInstance, Dict[str, Any]]:
    environment = data.get("environment")
    if isinstance(environment, str):
        env = load_environment(environment)
    elif isinstance(environment, dict):
        env = environment_from_mapping(environment)
    else:
        raise FileLoadError("Instance needs an 'environment' name or mapping")

    agents_data = data.get("agents")
    if not isinstance(agents_data, list) or not agents_data:
        raise FileLoadError("Instance needs a non-empty 'agents' list")
    agents = []
    for i, agent in enumerate(agents_data):
        try:
            agents.append(
                AgentSpec(
                    start=tuple(agent["start"]),
                    goal=tuple(agent["goal"]),
                    radius=agent["radius"],
                    max_speed=agent.get("max_speed", 1.0),
                )
            )
        except KeyError as e:
            raise FileLoadError(f"Agent {i} is missing the {e} key") from e
        except (TypeError, ValueError) as e:
            raise FileLoadError(f"Agent {i} is malformed: {str(e)}") from e
    return ProblemInstance(env, tuple(agents)), dict(data.get("metadata") or {})


def load_instance(file_path) -> Tuple[ProblemInstance, Dict[str, Any]]:
    """
    Load a problem instance file.

    The environment is either a built-in identifier or an inline mapping.

    Returns:
        tuple: (ProblemInstance, metadata mapping)

    Raises:
        FileLoadError: If the file cannot be read or is malformed
        InstanceError: If a start or goal violates the instance invariants
    """
    data = _read_document(file_path)
    try:
        return instance_from_document(data)
    except GeometryError as e:
        raise FileLoadError(f"Invalid environment in '{file_path}': {str(e)}") from e
    except InstanceError as e:
        # The message already names the agent.
        error = InstanceError(f"Invalid instance '{file_path}': {str(e)}")
        error.agent = e.agent
        raise error from e


def instance_to_document(
    inst: ProblemInstance, metadata: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    meta = dict(metadata or {})
    meta.setdefault("env_hash", inst.env.geometry_hash())
    return {
        "schema_version": SCHEMA_VERSION,
        "environment": environment_to_mapping(inst.env),
        "agents": [
            {
                "start": [a.start.x, a.start.y],
                "goal": [a.goal.x, a.goal.y],
                "radius": a.radius,
                "max_speed": a.max_speed,
            }
            for a in inst.agents
        ],
        "metadata": meta,
    }


def dump_instance(inst: ProblemInstance, file_path, metadata: Optional[Dict[str, Any]] = None) -> None:
    """Write ``inst`` as JSON, adding the environment hash to the metadata."""
    _write_document(instance_to_document(inst, metadata), file_path)
    logger.debug("Wrote instance with %d agents to %s", inst.n, file_path)


def solution_to_document(
    solution: Solution,
    algorithm: str,
    seed: Optional[int] = None,
    emissions: Sequence[Dict[str, Any]] = (),
    instance_ref: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "instance": dict(instance_ref or {}),
        "algorithm": algorithm,
        "seed": seed,
        "cost": solution.cost,
        "trajectories": [[list(bp) for bp in tr.breakpoints()] for tr in solution.trajectories],
        "emissions": [dict(e) for e in emissions],
    }


def dump_solution(
    solution: Solution,
    file_path,
    algorithm: str,
    seed: Optional[int] = None,
    emissions: Sequence[Dict[str, Any]] = (),
    instance_ref: Optional[Dict[str, Any]] = None,
) -> None:
    """
    Write a solution with its producing algorithm and emission history.

    ``emissions`` are mappings with ``elapsed``, ``iteration`` and ``cost``.
    """
    _write_document(
        solution_to_document(solution, algorithm, seed, emissions, instance_ref), file_path
    )


def load_solution(file_path) -> Tuple[Solution, Dict[str, Any]]:
    """
    Load a solution file.

    Returns:
        tuple: (Solution with the cost recomputed from the trajectories,
            mapping of the remaining fields)

    Raises:
        FileLoadError: If the file cannot be read or a trajectory is malformed
    """
    data = _read_document(file_path)
    raw = data.get("trajectories")
    if not isinstance(raw, list) or not raw:
        raise FileLoadError(f"Solution '{file_path}' needs a non-empty 'trajectories' list")
    try:
        trajectories = [Trajectory.from_breakpoints(tuple(bp) for bp in tr) for tr in raw]
    except (TypeError, ValueError) as e:
        raise FileLoadError(f"Malformed trajectory in '{file_path}': {str(e)}") from e
    meta = {k: v for k, v in data.items() if k != "trajectories"}
    return Solution.from_trajectories(trajectories), meta
