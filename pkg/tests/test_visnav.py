"""
Tests for visibility graphs and single-agent shortest paths.
"""

import math

import numpy as np
import pytest
from oracles import FINE_OFFSETS, GridOracle, grid_shortest_length

from orca_rrt.cache import MemoryCacheAdapter
from orca_rrt.environment_resolver import load_environment
from orca_rrt.geom import Environment, Polygon, Rect, disc_free
from orca_rrt.visnav import GraphCache, PathPolyline, build, shortest_path, to_trajectory


def around_square_length(gap, half, radius):
    """Exact detour over an inflated square between two points level with its centre."""
    reach = math.hypot(gap, half)
    tangent = math.sqrt(reach**2 - radius**2)
    heading = math.atan2(half, gap) + math.asin(radius / reach)
    return 2 * (tangent + radius * heading) + 2 * half


class TestBuild:
    """Test suite for visibility graph construction."""

    def test_empty_environment_has_no_nodes(self, empty_env):
        """Test that an obstacle-free world yields an empty graph."""
        graph = build(empty_env, 50)
        assert graph.size == 0
        assert graph.edges == []

    def test_square_corner_points(self, square_env):
        """Test four tangent points for each of the four square corners."""
        graph = build(square_env, 50, corner_points=4)
        assert graph.size == 16

    def test_single_corner_point(self, square_env):
        """Test one bisector point per corner."""
        assert build(square_env, 50, corner_points=1).size == 4

    def test_invalid_corner_points(self, square_env):
        """Test that at least one corner point is required."""
        with pytest.raises(ValueError, match="corner_points"):
            build(square_env, 50, corner_points=0)

    def test_nodes_are_disc_free_and_edges_symmetric(self, door_env):
        """Test node clearance and symmetric edge weights."""
        graph = build(door_env, 60)
        assert graph.size > 0
        assert all(disc_free(p, 60, door_env) for p in graph.nodes)
        assert (graph.weights == graph.weights.T).all()
        for i, j, length in graph.edges:
            assert length == pytest.approx(math.dist(graph.nodes[i], graph.nodes[j]))


class TestShortestPath:
    """Test suite for single-agent shortest paths."""

    def test_direct_line_when_visible(self, empty_env):
        """Test that a visible goal gives a two-point path."""
        path = shortest_path(build(empty_env, 50), (100, 100), (900, 400))
        assert len(path) == 2
        assert path.length == pytest.approx(math.dist((100, 100), (900, 400)))

    def test_same_start_and_goal(self, empty_env):
        """Test the trivial one-point path."""
        path = shortest_path(build(empty_env, 50), (100, 100), (100, 100))
        assert path.length == 0.0

    def test_around_square(self, square_env):
        """Test the detour around the square against its exact length."""
        path = shortest_path(build(square_env, 50), (200, 500), (800, 500))
        exact = around_square_length(200, 100, 50)
        assert exact == pytest.approx(704.8, abs=0.1)
        assert exact <= path.length <= 1.01 * exact

    def test_disconnected(self):
        """Test that a wall across the whole world leaves no path."""
        env = Environment(
            Rect(0, 0, 1000, 1000),
            (Polygon(((0, 450), (1000, 450), (1000, 550), (0, 550))),),
        )
        assert shortest_path(build(env, 50), (500, 200), (500, 800)) is None

    def test_symmetric(self, door_env):
        """Test that reversing start and goal keeps the length."""
        graph = build(door_env, 50)
        forward = shortest_path(graph, (200, 200), (700, 800))
        backward = shortest_path(graph, (700, 800), (200, 200))
        assert forward.length == pytest.approx(backward.length)

    def test_monotone_in_radius(self, square_env):
        """Test that bigger discs never find shorter detours."""
        small = shortest_path(build(square_env, 30), (200, 500), (800, 500)).length
        large = shortest_path(build(square_env, 80), (200, 500), (800, 500)).length
        assert small < large

    @pytest.mark.parametrize(
        "env_name,start,goal",
        [
            ("square", (200, 500), (800, 500)),
            ("door", (200, 200), (200, 800)),
        ],
    )
    def test_matches_grid_oracle(self, env_name, start, goal, square_env, door_env):
        """Test agreement with a 16-connected grid search within 3%."""
        env = square_env if env_name == "square" else door_env
        vg = shortest_path(build(env, 50), start, goal).length
        grid = grid_shortest_length(env, 50, start, goal, cell=10)
        assert math.isfinite(grid)
        assert abs(vg - grid) <= 0.03 * grid

    @pytest.mark.slow
    @pytest.mark.parametrize("env_name", ["square", "door", "cross", "maze"])
    def test_matches_fine_grid_oracle_on_random_queries(self, env_name, square_env):
        """Test fifty random queries per environment against a fine grid within 2%."""
        env = square_env if env_name == "square" else load_environment(env_name)
        graph = build(env, 50)
        grid = GridOracle(env, 50, cell=5.0, offsets=FINE_OFFSETS)
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 50:
            start, goal = (tuple(p) for p in rng.integers(11, 190, size=(2, 2)) * 5.0)
            if math.dist(start, goal) < 300.0:
                continue
            if not (disc_free(start, 50, env) and disc_free(goal, 50, env)):
                continue
            expected = grid.length(start, goal)
            path = shortest_path(graph, start, goal)
            assert path is not None
            assert math.isfinite(expected)
            assert abs(path.length - expected) <= 0.02 * expected, (start, goal)
            checked += 1

    def test_start_on_graph_node(self, square_env):
        """Test that a query point sitting on a graph node is not repeated."""
        graph = build(square_env, 50)
        node = tuple(graph.nodes[0])
        for path in (shortest_path(graph, node, (900, 500)), shortest_path(graph, (100, 500), node)):
            assert path is not None
            assert all(a != b for a, b in zip(path.waypoints, path.waypoints[1:]))
            trajectory = to_trajectory(path, 1.0)
            assert trajectory.arrival_time == pytest.approx(path.length)


class TestGoalField:
    """Test suite for goal distance fields."""

    def test_distance_matches_shortest_path(self, square_env):
        """Test that field distances agree with a fresh search."""
        graph = build(square_env, 50)
        field = graph.goal_field((800, 500))
        for start in [(200, 500), (200, 150), (500, 250)]:
            path = shortest_path(graph, start, (800, 500))
            assert field.distance(start) == pytest.approx(path.length)

    def test_visible_goal_is_next_waypoint(self, square_env):
        """Test that a visible goal is steered to directly."""
        field = build(square_env, 50).goal_field((800, 800))
        waypoint, remaining = field.next_waypoint((200, 800))
        assert waypoint == (800, 800)
        assert remaining == pytest.approx(600.0)

    def test_waypoint_splits_the_distance(self, square_env):
        """Test that a hidden goal is reached through a graph node."""
        graph = build(square_env, 50)
        field = graph.goal_field((900, 500))
        waypoint, beyond = field.waypoint((100, 500))
        assert waypoint != (900, 500)
        assert any(tuple(node) == waypoint for node in graph.nodes)
        assert math.dist((100, 500), waypoint) + beyond == pytest.approx(field.distance((100, 500)))

    def test_waypoint_at_goal(self, square_env):
        """Test that standing on the goal keeps the goal as waypoint."""
        field = build(square_env, 50).goal_field((900, 500))
        assert field.waypoint((900, 500)) == ((900, 500), 0.0)

    def test_unreachable_goal(self):
        """Test that a goal behind a full-width wall has no waypoint."""
        env = Environment(
            Rect(0, 0, 1000, 1000),
            (Polygon(((0, 450), (1000, 450), (1000, 550), (0, 550))),),
        )
        field = build(env, 50).goal_field((500, 800))
        assert field.waypoint((500, 200)) == (None, math.inf)
        assert field.distance((500, 200)) == math.inf


class TestToTrajectory:
    """Test suite for constant-speed traversal."""

    def test_timing(self):
        """Test breakpoint times at unit speed."""
        tr = to_trajectory(PathPolyline(((0, 0), (3, 4), (3, 10))), 1.0)
        assert tr.times.tolist() == pytest.approx([0.0, 5.0, 11.0])
        assert tr.final_point == (3.0, 10.0)

    def test_speed_scales_time(self):
        """Test that doubling the speed halves the arrival time."""
        tr = to_trajectory(PathPolyline(((0, 0), (3, 4), (3, 10))), 2.0)
        assert tr.arrival_time == pytest.approx(5.5)

    def test_nonpositive_speed(self):
        """Test that the speed must be positive."""
        with pytest.raises(ValueError, match="speed"):
            to_trajectory(PathPolyline(((0, 0), (1, 0))), 0.0)


class TestGraphCache:
    """Test suite for per-radius graph caching."""

    def test_builds_once_per_radius(self, square_env):
        """Test that repeated lookups return the same graph."""
        graphs = GraphCache(square_env)
        assert graphs.get(50) is graphs.get(50.0)
        assert graphs.get(50) is not graphs.get(60)
        assert len(graphs.cache_adapter) == 2

    def test_goal_fields_are_cached(self, square_env):
        """Test that each (radius, goal) field is built once."""
        graphs = GraphCache(square_env)
        field = graphs.goal_field(50, (900, 500))
        assert graphs.goal_field(50.0, np.array([900.0, 500.0])) is field
        assert graphs.goal_field(60, (900, 500)) is not field
        assert field.graph is graphs.get(50)
        assert len(graphs.field_cache_adapter) == 2

    def test_goal_field_cache_is_bounded(self, square_env):
        """Test that an evicted field is rebuilt on the next lookup."""
        graphs = GraphCache(square_env, field_cache_adapter=MemoryCacheAdapter(max_entries=1))
        first = graphs.goal_field(50, (900, 500))
        graphs.goal_field(50, (100, 500))
        again = graphs.goal_field(50, (900, 500))
        assert again is not first
        assert again.distance((100, 500)) == pytest.approx(first.distance((100, 500)))
        assert len(graphs.field_cache_adapter) == 1
