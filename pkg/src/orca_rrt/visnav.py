"""
Radius-aware visibility graphs and single-agent shortest paths.

Obstacles are inflated by the agent radius, which reduces the disc agent to a
point. Each convex obstacle corner contributes a few tangent points around
the inflated arc; every pair of nodes that sees the other at the required
clearance becomes an edge.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cache import CacheAdapter, MemoryCacheAdapter
from .geom import EPS, Environment, Point, as_point, disc_free, segments_disc_free
from .traj import Trajectory

logger = logging.getLogger(__name__)

DEFAULT_CORNER_POINTS = 4

# Goal fields kept per GraphCache.
FIELD_CACHE_ENTRIES = 4096

# Relative outward push of inflated corner points, so that edges between
# them pass the strict clearance test.
INFLATION_EPS = 1e-6


@dataclass(frozen=True)
class PathPolyline:
    """Ordered waypoints of a single-agent path."""

    waypoints: Tuple[Point, ...]

    @property
    def length(self) -> float:
        return path_length(self)

    def __len__(self):
        return len(self.waypoints)


def path_length(path: PathPolyline) -> float:
    """Total Euclidean length of the polyline."""
    return float(
        sum(math.dist(a, b) for a, b in zip(path.waypoints, path.waypoints[1:]))
    )


def _corner_points(env: Environment, radius: float, k: int) -> np.ndarray:
    inflated = radius * (1.0 + INFLATION_EPS)
    points = []
    for poly in env.obstacles:
        verts = poly.vertices
        n = len(verts)
        for i in range(n):
            if not poly.is_convex_vertex(i):
                continue
            prev_v, v, next_v = verts[i - 1], verts[i], verts[(i + 1) % n]
            # Outward normals of a counter-clockwise polygon point to the right.
            theta_in = math.atan2(-(v.x - prev_v.x), v.y - prev_v.y)
            theta_out = math.atan2(-(next_v.x - v.x), next_v.y - v.y)
            sweep = (theta_out - theta_in) % (2.0 * math.pi)
            if k == 1:
                angles = [theta_in + 0.5 * sweep]
                rho = inflated / math.cos(0.5 * sweep)
            else:
                step = sweep / (k - 1)
                angles = [theta_in + j * step for j in range(k)]
                rho = inflated / math.cos(0.5 * step)
            for angle in angles:
                points.append((v.x + rho * math.cos(angle), v.y + rho * math.sin(angle)))
    return np.array(points, dtype=float).reshape(-1, 2)


def _dijkstra(weights: np.ndarray, source: int):
    """
    Dense uniform-cost search.

    Ties are broken by the smaller node index (``argmin`` returns the first
    minimum), which keeps paths reproducible.
    """
    size = len(weights)
    dist = np.full(size, np.inf)
    prev = np.full(size, -1, dtype=int)
    done = np.zeros(size, dtype=bool)
    dist[source] = 0.0
    for _ in range(size):
        masked = np.where(done, np.inf, dist)
        u = int(np.argmin(masked))
        if not np.isfinite(masked[u]):
            break
        done[u] = True
        candidate = dist[u] + weights[u]
        better = (candidate < dist) & ~done
        dist[better] = candidate[better]
        prev[better] = u
    return dist, prev


class VisibilityGraph:
    """
    Visibility graph over inflated obstacle corners for one agent radius.

    Immutable after construction; queries are thread-safe.
    """

    def __init__(self, env: Environment, radius: float, nodes: np.ndarray, weights: np.ndarray):
        self.env = env
        self.radius = float(radius)
        self.nodes = nodes
        self.weights = weights
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def edges(self):
        """List of ``(i, j, length)`` with ``i < j``."""
        rows, cols = np.nonzero(np.isfinite(np.triu(self.weights, k=1)))
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(rows, cols)]

    def visible_from(self, p) -> np.ndarray:
        """Which static nodes a disc at ``p`` reaches along a straight line."""
        if self.size == 0:
            return np.zeros(0, dtype=bool)
        origin = np.broadcast_to(np.asarray(p, dtype=float), self.nodes.shape)
        return segments_disc_free(origin, self.nodes, self.radius, self.env)

    def _attach(self, points) -> np.ndarray:
        """Weight matrix with extra query nodes appended after the static ones."""
        size = self.size
        extra = len(points)
        weights = np.full((size + extra, size + extra), np.inf)
        weights[:size, :size] = self.weights
        for k, p in enumerate(points):
            row = size + k
            if size:
                visible = self.visible_from(p)
                lengths = np.linalg.norm(self.nodes - np.asarray(p, dtype=float), axis=1)
                lengths = np.where(visible, lengths, np.inf)
                weights[row, :size] = lengths
                weights[:size, row] = lengths
        for k in range(extra):
            for m in range(k + 1, extra):
                a, b = points[k], points[m]
                if segments_disc_free([a], [b], self.radius, self.env)[0]:
                    length = math.dist(a, b)
                    weights[size + k, size + m] = length
                    weights[size + m, size + k] = length
        return weights

    def shortest_path(self, s, d) -> Optional[PathPolyline]:
        """
        Minimal-length polyline from ``s`` to ``d``, or None if disconnected.
        """
        s, d = as_point(s), as_point(d)
        if s == d:
            return PathPolyline((s,))
        if segments_disc_free([s], [d], self.radius, self.env)[0]:
            return PathPolyline((s, d))
        if self.size == 0:
            return None

        weights = self._attach([s, d])
        source, target = self.size, self.size + 1
        dist, prev = _dijkstra(weights, source)
        if not np.isfinite(dist[target]):
            return None

        order = [target]
        while order[-1] != source:
            order.append(int(prev[order[-1]]))
        order.reverse()
        waypoints = [s]
        for node in order[1:-1]:
            waypoints.append(Point(float(self.nodes[node, 0]), float(self.nodes[node, 1])))
        waypoints.append(d)
        # A query point sitting on a graph node would repeat it.
        deduped = [waypoints[0]]
        for w in waypoints[1:]:
            if w != deduped[-1]:
                deduped.append(w)
        return PathPolyline(tuple(deduped))

    def goal_field(self, goal) -> "GoalField":
        return GoalField(self, goal)


class GoalField:
    """
    Distances from every graph node to one goal.

    Answers "which way to the goal from here" for any collision-free
    position without a fresh search: the first waypoint is the visible node
    minimising straight distance plus the node's distance to the goal.
    """

    def __init__(self, graph: VisibilityGraph, goal):
        self.graph = graph
        self.goal = as_point(goal)
        if graph.size:
            weights = graph._attach([self.goal])
            dist, _ = _dijkstra(weights, graph.size)
            self.node_distances = dist[: graph.size]
        else:
            self.node_distances = np.zeros(0)

    def waypoint(self, p) -> Tuple[Optional[Point], float]:
        """
        The first waypoint from ``p`` and the path length beyond it.

        Returns:
            tuple: (goal or graph node, length from that waypoint to the
                goal), or (None, inf) when nothing is reachable from ``p``.
        """
        graph = self.graph
        if math.dist(p, self.goal) == 0.0 or segments_disc_free(
            [p], [self.goal], graph.radius, graph.env
        )[0]:
            return self.goal, 0.0
        if graph.size == 0:
            return None, math.inf
        offsets = np.linalg.norm(graph.nodes - np.asarray(p, dtype=float), axis=1)
        visible = graph.visible_from(p) & (offsets > EPS)
        totals = np.where(visible, offsets + self.node_distances, np.inf)
        k = int(np.argmin(totals))
        if not np.isfinite(totals[k]):
            return None, math.inf
        return Point(float(graph.nodes[k, 0]), float(graph.nodes[k, 1])), float(self.node_distances[k])

    def next_waypoint(self, p):
        """
        Returns:
            tuple: (waypoint Point or None, remaining path length). The
                waypoint is None when nothing is reachable from ``p``.
        """
        waypoint, beyond = self.waypoint(p)
        if waypoint is None:
            return None, math.inf
        return waypoint, math.dist(p, waypoint) + beyond

    def distance(self, p) -> float:
        """Remaining shortest path length from ``p`` to the goal."""
        return self.next_waypoint(p)[1]


def build(
    env: Environment, radius: float, corner_points: int = DEFAULT_CORNER_POINTS
) -> VisibilityGraph:
    """
    Build the visibility graph of ``env`` for discs of the given radius.

    Args:
        env: The environment
        radius: Agent radius the graph must keep clear
        corner_points: Tangent points generated per convex corner

    Returns:
        VisibilityGraph: The graph; empty environments yield zero nodes
    """
    if corner_points < 1:
        raise ValueError(f"corner_points must be >= 1, got {corner_points}")
    candidates = _corner_points(env, radius, corner_points)
    keep = [disc_free(p, radius, env) for p in candidates]
    nodes = candidates[np.array(keep, dtype=bool)] if len(candidates) else candidates
    size = len(nodes)
    weights = np.full((size, size), np.inf)
    for i in range(size - 1):
        others = nodes[i + 1 :]
        origin = np.broadcast_to(nodes[i], others.shape)
        visible = segments_disc_free(origin, others, radius, env)
        lengths = np.linalg.norm(others - nodes[i], axis=1)
        row = np.where(visible, lengths, np.inf)
        weights[i, i + 1 :] = row
        weights[i + 1 :, i] = row
    graph = VisibilityGraph(env, radius, nodes, weights)
    logger.debug(
        "Built visibility graph for '%s' at radius %g: %d nodes, %d edges",
        env.name,
        radius,
        size,
        len(graph.edges),
    )
    return graph


def shortest_path(g: VisibilityGraph, s, d) -> Optional[PathPolyline]:
    """Shortest collision-free polyline from ``s`` to ``d`` (None if no path)."""
    return g.shortest_path(s, d)


def to_trajectory(path: PathPolyline, v: float) -> Trajectory:
    """
    Traverse the polyline at constant speed ``v``, then hold the last point.
    """
    if v <= 0.0:
        raise ValueError(f"speed must be positive, got {v}")
    times = [0.0]
    travelled = 0.0
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        travelled += math.dist(a, b)
        times.append(travelled / v)
    return Trajectory(times, path.waypoints)


class GraphCache:
    """
    Visibility graphs of one environment, built once per agent radius, and
    the goal fields derived from them.

    Safe to share between threads; each radius is built at most once. At
    most ``FIELD_CACHE_ENTRIES`` goal fields are held, least recently used
    first out.
    """

    def __init__(
        self,
        env: Environment,
        corner_points: int = DEFAULT_CORNER_POINTS,
        cache_adapter: Optional[CacheAdapter] = None,
        field_cache_adapter: Optional[CacheAdapter] = None,
    ):
        self.env = env
        self.corner_points = corner_points
        self.cache_adapter = cache_adapter or MemoryCacheAdapter()
        self.field_cache_adapter = field_cache_adapter or MemoryCacheAdapter(FIELD_CACHE_ENTRIES)

    def get(self, radius: float) -> VisibilityGraph:
        key = (float(radius), self.corner_points)
        return self.cache_adapter.get_or_create(
            key, lambda: build(self.env, radius, self.corner_points)
        )

    def goal_field(self, radius: float, goal) -> GoalField:
        """Distance field toward ``goal`` for discs of the given radius."""
        goal = as_point(goal)
        key = (float(radius), self.corner_points, goal)
        return self.field_cache_adapter.get_or_create(
            key, lambda: self.get(radius).goal_field(goal)
        )
