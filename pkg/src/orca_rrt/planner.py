"""
Multi-agent RRT* over the joint configuration space.

A tree of joint states is grown from the agents' starts. Each new sample is
connected by one of three steering extensions (straight lines, visibility
graph paths or an ORCA simulation), attached to the cheapest reachable
parent in its neighbourhood, and then offered as a cheaper parent to that
neighbourhood. Whenever the joint goal state becomes reachable more cheaply
a new solution is emitted.
"""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from .exceptions import SamplingStarvationError, TreeConsistencyError
from .geom import Point, as_point, disc_free, segments_disc_free
from .orca import SimParams, simulate
from .traj import (
    ProblemInstance,
    Solution,
    Trajectory,
    check_cf,
    closest_approach,
    concatenate,
)
from .visnav import DEFAULT_CORNER_POINTS, GraphCache, to_trajectory

logger = logging.getLogger(__name__)

# Rejections tolerated while placing the agents of one draw before the whole
# draw restarts, and in total before the sampler gives up.
DRAW_REJECTION_LIMIT = 10**4
STARVATION_LIMIT = 10**6

# Relative tolerance of the tree audit.
AUDIT_TOLERANCE = 1e-9


class ExtensionKind(Enum):
    LINE = "line"
    VISIBILITY_GRAPH = "vg"
    ORCA = "orca"


@dataclass(frozen=True)
class JointState:
    """One position per agent; a point of the joint configuration space."""

    positions: Tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(as_point(p) for p in self.positions))

    @classmethod
    def of(cls, points) -> "JointState":
        return cls(tuple(points))

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, i) -> Point:
        return self.positions[i]

    def __iter__(self):
        return iter(self.positions)

    def as_array(self) -> np.ndarray:
        return np.array(self.positions, dtype=float).reshape(-1, 2)

    def is_valid(self, inst: ProblemInstance) -> bool:
        """Every disc collision-free and no two discs overlapping."""
        if len(self) != inst.n:
            return False
        for p, agent in zip(self.positions, inst.agents):
            if not disc_free(p, agent.radius, inst.env):
                return False
        for i in range(inst.n):
            for j in range(i + 1, inst.n):
                gap = math.dist(self.positions[i], self.positions[j])
                if gap <= inst.agents[i].radius + inst.agents[j].radius:
                    return False
        return True


def joint_dist(a: JointState, b: JointState) -> float:
    """Sum of the agents' Euclidean displacements."""
    if len(a) != len(b):
        raise ValueError(f"joint states differ in size: {len(a)} vs {len(b)}")
    return float(sum(math.dist(p, q) for p, q in zip(a, b)))


def lower_bound_cost(a: JointState, b: JointState, speeds) -> float:
    """Summed travel time if every agent could move straight at full speed."""
    return float(
        sum(math.dist(p, q) / v for p, q, v in zip(a, b, speeds))
    )


def edge_cost(edge: Sequence[Trajectory]) -> float:
    """Summed per-agent traversal time of one extension bundle."""
    return float(sum(tr.arrival_time for tr in edge))


def near_radius(gamma: float, n_vertices: int, n_agents: int) -> float:
    """The shrinking RRT* neighbourhood radius for a 2n-dimensional space."""
    if n_vertices <= 1:
        return 0.0
    return gamma * (math.log(n_vertices) / n_vertices) ** (1.0 / (2 * n_agents))


def _draw(inst: ProblemInstance, rng: np.random.Generator):
    rejected = 0
    placed: List[Point] = []
    box = inst.env.boundary
    for agent in inst.agents:
        r = agent.radius
        while True:
            if rejected >= DRAW_REJECTION_LIMIT:
                return None, rejected
            x = rng.uniform(box.xmin + r, box.xmax - r)
            y = rng.uniform(box.ymin + r, box.ymax - r)
            p = Point(float(x), float(y))
            clear = disc_free(p, r, inst.env) and all(
                math.dist(p, q) > r + other.radius
                for q, other in zip(placed, inst.agents)
            )
            if clear:
                placed.append(p)
                break
            rejected += 1
    return JointState(tuple(placed)), rejected


def sample(
    inst: ProblemInstance, rng: np.random.Generator, goal_bias: float
) -> JointState:
    """
    Draw a random valid joint state, or the joint goal with ``goal_bias``.

    Each agent is placed uniformly inside the boundary (inset by its
    radius) and redrawn until its disc is free and clear of the agents
    already placed.

    Raises:
        ValueError: If goal_bias is outside [0, 1)
        SamplingStarvationError: After a million rejected placements
    """
    if not 0.0 <= goal_bias < 1.0:
        raise ValueError(f"goal_bias must lie in [0, 1), got {goal_bias}")
    if goal_bias > 0.0 and rng.random() < goal_bias:
        return JointState(inst.goals)
    total = 0
    while True:
        state, rejected = _draw(inst, rng)
        total += rejected
        if state is not None:
            return state
        if total >= STARVATION_LIMIT:
            logger.warning("Joint-state sampler starved after %d rejections", total)
            raise SamplingStarvationError(total)


@dataclass
class Vertex:
    state: JointState
    parent: Optional[int]
    edge: Tuple[Trajectory, ...]
    edge_cost: float
    cost: float
    children: List[int] = field(default_factory=list)


class PlanTree:
    """
    The RRT* tree. Vertex 0 is the root; edges are stored unshifted, each
    starting at its parent's state at time 0.
    """

    def __init__(self, root: JointState):
        self.vertices: List[Vertex] = [Vertex(root, None, (), 0.0, 0.0)]
        self._positions = np.empty((64, len(root), 2))
        self._positions[0] = root.as_array()

    def __len__(self):
        return len(self.vertices)

    def __getitem__(self, index: int) -> Vertex:
        return self.vertices[index]

    @property
    def positions(self) -> np.ndarray:
        return self._positions[: len(self.vertices)]

    def distances(self, s: JointState) -> np.ndarray:
        """joint_dist from ``s`` to every vertex."""
        return np.linalg.norm(self.positions - s.as_array(), axis=2).sum(axis=1)

    def find(self, s: JointState) -> Optional[int]:
        """Index of a vertex whose state equals ``s`` exactly."""
        matches = np.flatnonzero(np.all(self.positions == s.as_array(), axis=(1, 2)))
        return int(matches[0]) if len(matches) else None

    def add(self, state: JointState, parent: int, edge, cost_of_edge: float) -> int:
        index = len(self.vertices)
        if index == len(self._positions):
            grown = np.empty((2 * index,) + self._positions.shape[1:])
            grown[:index] = self._positions
            self._positions = grown
        self._positions[index] = state.as_array()
        self.vertices.append(
            Vertex(state, parent, tuple(edge), cost_of_edge, self.vertices[parent].cost + cost_of_edge)
        )
        self.vertices[parent].children.append(index)
        return index

    def is_ancestor(self, candidate: int, index: int) -> bool:
        """True if ``candidate`` lies on the path from the root to ``index``."""
        current: Optional[int] = index
        while current is not None:
            if current == candidate:
                return True
            current = self.vertices[current].parent
        return False

    def reparent(self, index: int, parent: int, edge, cost_of_edge: float) -> None:
        """Move ``index`` under ``parent`` and push the cost change to its subtree."""
        if self.is_ancestor(index, parent):
            raise TreeConsistencyError(f"re-parenting vertex {index} under {parent} makes a cycle")
        vertex = self.vertices[index]
        self.vertices[vertex.parent].children.remove(index)
        self.vertices[parent].children.append(index)
        vertex.parent = parent
        vertex.edge = tuple(edge)
        vertex.edge_cost = cost_of_edge
        stack = [index]
        while stack:
            current = self.vertices[stack.pop()]
            current.cost = self.vertices[current.parent].cost + current.edge_cost
            stack.extend(current.children)

    def path_to(self, index: int) -> List[int]:
        path = []
        current: Optional[int] = index
        while current is not None:
            path.append(current)
            current = self.vertices[current].parent
        path.reverse()
        return path

    def audit(self) -> None:
        """
        Raises:
            TreeConsistencyError: If a cost, parent link or edge endpoint
                disagrees with the rest of the tree.
        """
        root = self.vertices[0]
        if root.parent is not None or root.cost != 0.0:
            raise TreeConsistencyError("root must have no parent and zero cost")
        for index, vertex in enumerate(self.vertices[1:], start=1):
            parent = self.vertices[vertex.parent]
            if index not in parent.children:
                raise TreeConsistencyError(f"vertex {index} missing from its parent's children")
            expected = parent.cost + vertex.edge_cost
            if abs(vertex.cost - expected) > AUDIT_TOLERANCE * max(1.0, expected):
                raise TreeConsistencyError(
                    f"vertex {index} cost {vertex.cost} != parent cost + edge cost {expected}"
                )
            if abs(vertex.edge_cost - edge_cost(vertex.edge)) > AUDIT_TOLERANCE * max(1.0, expected):
                raise TreeConsistencyError(f"vertex {index} edge cost does not match its edge")
            for tr, a, b in zip(vertex.edge, parent.state, vertex.state):
                if tr.start_point != a or tr.final_point != b:
                    raise TreeConsistencyError(f"edge into vertex {index} misses its endpoints")


def nearest(tree: PlanTree, s: JointState) -> int:
    """Closest vertex under joint_dist; the lowest index wins ties."""
    return int(np.argmin(tree.distances(s)))


def near(tree: PlanTree, s: JointState, gamma: float) -> List[int]:
    """Vertices strictly inside the RRT* radius around ``s``, closest first."""
    radius = near_radius(gamma, len(tree), len(s))
    if radius == 0.0:
        return []
    distances = tree.distances(s)
    inside = np.flatnonzero(distances < radius)
    order = np.argsort(distances[inside], kind="stable")
    return [int(k) for k in inside[order]]


def _bundle_separated(edge: Sequence[Trajectory], radii) -> bool:
    n = len(edge)
    for i in range(n):
        for j in range(i + 1, n):
            if closest_approach(edge[i], edge[j])[0] <= radii[i] + radii[j]:
                return False
    return True


def extend_line(x: JointState, y: JointState, inst: ProblemInstance):
    """Every agent moves straight to its target at full speed."""
    edge = tuple(
        Trajectory.line(a, b, agent.max_speed) for a, b, agent in zip(x, y, inst.agents)
    )
    for a, b, agent in zip(x, y, inst.agents):
        if a != b and not segments_disc_free([a], [b], agent.radius, inst.env)[0]:
            return None
    return edge if _bundle_separated(edge, inst.radii) else None


def extend_vg(x: JointState, y: JointState, inst: ProblemInstance, graphs: GraphCache):
    """Every agent follows its shortest obstacle-avoiding path at full speed."""
    edge = []
    for a, b, agent in zip(x, y, inst.agents):
        path = graphs.get(agent.radius).shortest_path(a, b)
        if path is None:
            return None
        edge.append(to_trajectory(path, agent.max_speed))
    edge = tuple(edge)
    return edge if _bundle_separated(edge, inst.radii) else None


def extend_orca(
    x: JointState,
    y: JointState,
    inst: ProblemInstance,
    sim_params: SimParams,
    graphs: GraphCache,
    deadline: Optional[float] = None,
):
    """Simulate ORCA from ``x`` to ``y``; accepted only if every agent arrives."""
    outcome = simulate(inst, x.positions, y.positions, sim_params, graphs, deadline)
    return outcome.trajectories if outcome.reached else None


def extend(
    kind: ExtensionKind,
    x: JointState,
    y: JointState,
    inst: ProblemInstance,
    sim_params: SimParams = SimParams(),
    graphs: Optional[GraphCache] = None,
    deadline: Optional[float] = None,
) -> Optional[Tuple[Trajectory, ...]]:
    """
    Steer from joint state ``x`` to ``y``.

    Returns:
        The per-agent trajectories, all starting at time 0 in ``x`` and
        ending exactly in ``y``, or None when the extension is rejected.
    """
    if kind is ExtensionKind.LINE:
        return extend_line(x, y, inst)
    graphs = graphs or GraphCache(inst.env)
    if kind is ExtensionKind.VISIBILITY_GRAPH:
        return extend_vg(x, y, inst, graphs)
    return extend_orca(x, y, inst, sim_params, graphs, deadline)


@dataclass(frozen=True)
class PlannerParams:
    """
    RRT* parameters. ``gamma=None`` uses twice the boundary diagonal times
    the number of agents.

    ORCA extensions other than the first root-to-goal attempt simulate with
    ``extension_dt`` (None keeps the simulator's step) and give up after
    ``extension_step_factor`` times the ideal makespan or
    ``extension_stall_time`` seconds without progress, whichever the
    simulator parameters do not already undercut.
    """

    goal_bias: float = 0.01
    gamma: Optional[float] = None
    max_near: int = 20
    corner_points: int = DEFAULT_CORNER_POINTS
    goal_first: bool = True
    audit_every: int = 0
    extension_dt: Optional[float] = 1.0
    extension_step_factor: float = 3.0
    extension_stall_time: float = 50.0

    def __post_init__(self):
        if not 0.0 <= self.goal_bias < 1.0:
            raise ValueError("PlannerParams.goal_bias must lie in [0, 1)")
        if self.gamma is not None and not self.gamma > 0.0:
            raise ValueError("PlannerParams.gamma must be positive")
        if self.max_near < 1:
            raise ValueError("PlannerParams.max_near must be positive")
        if self.corner_points < 1:
            raise ValueError("PlannerParams.corner_points must be positive")
        if self.audit_every < 0:
            raise ValueError("PlannerParams.audit_every must not be negative")
        if self.extension_dt is not None and not self.extension_dt > 0.0:
            raise ValueError("PlannerParams.extension_dt must be positive")
        if not self.extension_step_factor > 0.0:
            raise ValueError("PlannerParams.extension_step_factor must be positive")
        if not self.extension_stall_time > 0.0:
            raise ValueError("PlannerParams.extension_stall_time must be positive")

    @classmethod
    def from_mapping(cls, mapping) -> "PlannerParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"Unknown planner parameters: {', '.join(sorted(unknown))}")
        return cls(**{k: v for k, v in mapping.items() if v is not None})


@dataclass(frozen=True)
class Emission:
    """An improved solution and when it was found."""

    solution: Solution
    elapsed: float
    iteration: int


class Planner:
    """
    Anytime multi-agent RRT* for one instance and one extension kind.

    Example:
        >>> planner = Planner(inst, ExtensionKind.VISIBILITY_GRAPH, seed=3)
        >>> for emission in planner.plan(iterations=200):
        ...     print(emission.solution.cost)
    """

    def __init__(
        self,
        inst: ProblemInstance,
        kind: ExtensionKind,
        params: PlannerParams = PlannerParams(),
        sim_params: SimParams = SimParams(),
        graphs: Optional[GraphCache] = None,
        seed: int = 0,
    ):
        self.inst = inst
        self.kind = kind
        self.params = params
        self.sim_params = sim_params
        self.extension_sim_params = dataclasses.replace(
            sim_params,
            dt=params.extension_dt or sim_params.dt,
            step_factor=min(sim_params.step_factor, params.extension_step_factor),
            stall_time=min(sim_params.stall_time or math.inf, params.extension_stall_time),
        )
        self.graphs = graphs or GraphCache(inst.env, params.corner_points)
        self.seed = seed
        self.gamma = params.gamma or 2.0 * inst.env.boundary.diagonal * inst.n
        self.x_init = JointState(inst.starts)
        self.x_goal = JointState(inst.goals)
        self.tree = PlanTree(self.x_init)
        self.goal_index: Optional[int] = 0 if self.x_init == self.x_goal else None
        self.iterations = 0
        self._deadline: Optional[float] = None
        # Extensions are deterministic, so a rejected pair stays rejected.
        self._rejected: Set[Tuple[JointState, JointState]] = set()

    def _expired(self) -> bool:
        return self._deadline is not None and time.perf_counter() >= self._deadline

    def _extend(self, x: JointState, y: JointState):
        if (x, y) in self._rejected:
            return None
        if x == self.x_init and y == self.x_goal:
            sim_params = self.sim_params
        else:
            sim_params = self.extension_sim_params
        edge = extend(self.kind, x, y, self.inst, sim_params, self.graphs, self._deadline)
        if edge is None and not self._expired():
            self._rejected.add((x, y))
        return edge

    def plan(
        self, budget: Optional[float] = None, iterations: Optional[int] = None
    ) -> Iterator[Emission]:
        """
        Grow the tree until the wall-clock ``budget`` or the iteration
        count runs out, yielding every strictly cheaper solution.

        Raises:
            ValueError: If neither limit is given or a limit is not positive
        """
        if budget is None and iterations is None:
            raise ValueError("plan needs a wall-clock budget or an iteration count")
        if budget is not None and budget <= 0.0:
            raise ValueError(f"budget must be positive, got {budget}")
        if iterations is not None and iterations <= 0:
            raise ValueError(f"iterations must be positive, got {iterations}")

        started = time.perf_counter()
        self._deadline = started + budget if budget is not None else None
        rng = np.random.default_rng(self.seed)
        best = math.inf

        if self.goal_index is not None:
            emission = self._emit(best, started)
            if emission is not None:
                yield emission
            return

        while not self._expired():
            if iterations is not None and self.iterations >= iterations:
                break
            self.iterations += 1
            if self.iterations == 1 and self.params.goal_first:
                s = self.x_goal
            else:
                s = sample(self.inst, rng, self.params.goal_bias)
            self._step(s)

            if self.params.audit_every and self.iterations % self.params.audit_every == 0:
                self.tree.audit()
            if self.goal_index is not None:
                emission = self._emit(best, started)
                if emission is not None:
                    best = emission.solution.cost
                    yield emission

        logger.debug(
            "RRT* (%s) stopped after %d iterations with %d vertices",
            self.kind.value,
            self.iterations,
            len(self.tree),
        )

    def _step(self, s: JointState) -> None:
        tree = self.tree
        existing = tree.find(s)
        if existing is not None:
            if existing != 0:
                self._improve_parent(existing)
            return

        x_nearest = nearest(tree, s)
        edge = self._extend(tree[x_nearest].state, s)
        if edge is None:
            return
        neighbours = near(tree, s, self.gamma)[: self.params.max_near]

        parent, best_edge = x_nearest, edge
        best_cost = tree[x_nearest].cost + edge_cost(edge)
        for v in neighbours:
            if v == x_nearest or self._expired():
                continue
            state = tree[v].state
            if tree[v].cost + lower_bound_cost(state, s, self.inst.speeds) >= best_cost:
                continue
            candidate = self._extend(state, s)
            if candidate is None:
                continue
            cost = tree[v].cost + edge_cost(candidate)
            if cost < best_cost:
                parent, best_edge, best_cost = v, candidate, cost

        new = tree.add(s, parent, best_edge, edge_cost(best_edge))
        if s == self.x_goal:
            self.goal_index = new
        self._rewire(new, neighbours)

    def _improve_parent(self, index: int) -> None:
        tree = self.tree
        state = tree[index].state
        for v in near(tree, state, self.gamma)[: self.params.max_near + 1]:
            if v == index or self._expired() or tree.is_ancestor(index, v):
                continue
            bound = tree[v].cost + lower_bound_cost(tree[v].state, state, self.inst.speeds)
            if bound >= tree[index].cost:
                continue
            candidate = self._extend(tree[v].state, state)
            if candidate is None:
                continue
            cost = edge_cost(candidate)
            if tree[v].cost + cost < tree[index].cost:
                tree.reparent(index, v, candidate, cost)

    def _rewire(self, new: int, neighbours: Sequence[int]) -> None:
        tree = self.tree
        state = tree[new].state
        for v in neighbours:
            if self._expired():
                return
            if tree.is_ancestor(v, new):
                continue
            bound = tree[new].cost + lower_bound_cost(state, tree[v].state, self.inst.speeds)
            if bound >= tree[v].cost:
                continue
            candidate = self._extend(state, tree[v].state)
            if candidate is None:
                continue
            cost = edge_cost(candidate)
            if tree[new].cost + cost < tree[v].cost:
                tree.reparent(v, new, candidate, cost)

    def solution(self) -> Optional[Solution]:
        """The composed solution along the tree path to the goal, if any."""
        if self.goal_index is None:
            return None
        path = self.tree.path_to(self.goal_index)
        n = self.inst.n
        parts: List[List[Trajectory]] = [[] for _ in range(n)]
        offsets: List[float] = []
        offset = 0.0
        for index in path[1:]:
            edge = self.tree[index].edge
            for i in range(n):
                parts[i].append(edge[i])
            offsets.append(offset)
            offset += max(tr.arrival_time for tr in edge)
        trajectories = [
            concatenate(parts[i], offsets) if parts[i] else Trajectory.stationary(self.x_init[i])
            for i in range(n)
        ]
        return Solution.from_trajectories(trajectories)

    def _emit(self, best: float, started: float) -> Optional[Emission]:
        solution = self.solution()
        if solution is None or not solution.cost < best:
            return None
        if not check_cf(solution.trajectories, self.inst):
            logger.warning("Discarding composed solution that fails the CF check")
            return None
        elapsed = time.perf_counter() - started
        logger.info(
            "RRT* (%s) solution cost %.3f at iteration %d (%.3f s)",
            self.kind.value,
            solution.cost,
            self.iterations,
            elapsed,
        )
        return Emission(solution, elapsed, self.iterations)


def plan(
    inst: ProblemInstance,
    kind: ExtensionKind,
    budget: Optional[float] = None,
    seed: int = 0,
    iterations: Optional[int] = None,
    params: PlannerParams = PlannerParams(),
    sim_params: SimParams = SimParams(),
    graphs: Optional[GraphCache] = None,
) -> Iterator[Emission]:
    """Run a fresh Planner and yield its emissions."""
    planner = Planner(inst, kind, params, sim_params, graphs, seed)
    yield from planner.plan(budget=budget, iterations=iterations)
