"""
Tests for trajectories, pairwise separation and the collision-free check.
"""

import numpy as np
import pytest
from oracles import refined_min_separation, sampled_min_separation

from orca_rrt.exceptions import InstanceError
from orca_rrt.traj import (
    AgentSpec,
    ProblemInstance,
    Solution,
    Trajectory,
    check_cf,
    closest_approach,
    concatenate,
    evaluate,
    min_separation,
    solution_cost,
    validate_solution,
)


def straight_lines(inst):
    return [Trajectory.line(a.start, a.goal, a.max_speed) for a in inst.agents]


class TestTrajectory:
    """Test suite for Trajectory construction and evaluation."""

    def test_evaluate_interpolates_and_holds(self):
        """Test linear interpolation and holding the final point."""
        tr = Trajectory.from_breakpoints([(0, 0, 0), (2, 2, 0)])
        assert evaluate(tr, 1.0) == (1.0, 0.0)
        assert evaluate(tr, 5.0) == (2.0, 0.0)
        assert evaluate(tr, 0.0) == (0.0, 0.0)

    def test_trailing_holds_are_trimmed(self):
        """Test that arrival time ignores trailing stationary breakpoints."""
        tr = Trajectory([0, 1, 2], [(0, 0), (1, 0), (1, 0)])
        assert tr.arrival_time == 1.0
        assert len(tr.times) == 2

    def test_interior_wait_is_kept(self):
        """Test that a wait followed by more motion survives normalisation."""
        tr = Trajectory([0, 1, 3, 4], [(0, 0), (1, 0), (1, 0), (1, 1)])
        assert tr.arrival_time == 4.0
        assert evaluate(tr, 2.0) == (1.0, 0.0)

    def test_stationary(self):
        """Test that a stationary trajectory has arrival time zero."""
        tr = Trajectory.stationary((3, 4))
        assert tr.arrival_time == 0.0
        assert tr.max_speed() == 0.0

    def test_line_speed(self):
        """Test that a straight line moves at the requested speed."""
        tr = Trajectory.line((0, 0), (30, 40), 2.0)
        assert tr.arrival_time == pytest.approx(25.0)
        assert tr.max_speed() == pytest.approx(2.0)
        assert tr.length() == pytest.approx(50.0)

    def test_must_start_at_zero(self):
        """Test that breakpoint times must start at zero."""
        with pytest.raises(ValueError, match="t=0"):
            Trajectory([1, 2], [(0, 0), (1, 0)])

    def test_times_must_increase(self):
        """Test that breakpoint times must strictly increase."""
        with pytest.raises(ValueError, match="strictly increase"):
            Trajectory([0, 1, 1], [(0, 0), (1, 0), (2, 0)])

    def test_discontinuity_rejected(self):
        """Test that a repeated time with two positions is rejected."""
        with pytest.raises(ValueError, match="discontinuous"):
            Trajectory.from_breakpoints([(0, 0, 0), (1, 1, 0), (1, 2, 0)])

    def test_shifted_waits_at_start(self):
        """Test that a delayed trajectory holds its start point first."""
        tr = Trajectory.line((0, 0), (1, 0), 1.0).shifted(2.0)
        assert tr.arrival_time == pytest.approx(3.0)
        assert evaluate(tr, 1.0) == (0.0, 0.0)
        assert evaluate(tr, 2.5) == (0.5, 0.0)

    def test_concatenate_with_wait(self):
        """Test chaining two segments with a pause between them."""
        first = Trajectory.line((0, 0), (1, 0), 1.0)
        second = Trajectory.line((1, 0), (1, 1), 1.0)
        tr = concatenate([first, second], [0.0, 3.0])
        assert tr.times.tolist() == [0.0, 1.0, 3.0, 4.0]
        assert evaluate(tr, 2.0) == (1.0, 0.0)
        assert tr.final_point == (1.0, 1.0)

    def test_equality_and_hash(self):
        """Test value semantics of trajectories."""
        a = Trajectory.line((0, 0), (1, 0), 1.0)
        b = Trajectory.from_breakpoints([(0, 0, 0), (1, 1, 0)])
        assert a == b
        assert hash(a) == hash(b)


class TestMinSeparation:
    """Test suite for exact pairwise separation."""

    def test_head_on_pass(self):
        """Test two agents passing on parallel lines one unit apart."""
        a = Trajectory.line((0, 0), (10, 0), 1.0)
        b = Trajectory.line((10, 1), (0, 1), 1.0)
        separation, t = closest_approach(a, b)
        assert separation == pytest.approx(1.0)
        assert t == pytest.approx(5.0)

    def test_after_arrival(self):
        """Test that the closest approach may happen after one agent arrives."""
        a = Trajectory.line((0, 0), (1, 0), 1.0)
        b = Trajectory.line((10, 0), (3, 0), 1.0)
        assert min_separation(a, b) == pytest.approx(2.0)

    def test_stationary_pair(self):
        """Test the separation of two agents that never move."""
        a = Trajectory.stationary((0, 0))
        b = Trajectory.stationary((3, 4))
        assert min_separation(a, b) == pytest.approx(5.0)

    def test_symmetric(self):
        """Test that separation does not depend on argument order."""
        a = Trajectory.line((0, 0), (10, 3), 1.0)
        b = Trajectory.line((2, 8), (9, -1), 1.5)
        assert min_separation(a, b) == pytest.approx(min_separation(b, a))

    def test_matches_sampling_oracle(self):
        """Test random two-piece trajectories against dense sampling."""
        rng = np.random.default_rng(11)
        for _ in range(30):
            pair = []
            for _ in range(2):
                pts = rng.uniform(0, 10, size=(3, 2))
                times = np.concatenate([[0.0], np.cumsum(rng.uniform(1, 5, size=2))])
                pair.append(Trajectory(times, pts))
            exact = min_separation(*pair)
            sampled = sampled_min_separation(*pair, dt=1e-3)
            # Relative speed stays below 30, so samples are within 1.5e-2 of the infimum.
            assert exact <= sampled + 1e-9
            assert exact >= sampled - 2e-2

    @pytest.mark.slow
    @pytest.mark.parametrize("pieces", [1, 3])
    def test_matches_refined_oracle(self, pieces):
        """Test a thousand random trajectory pairs against sampling and local minimisation."""
        rng = np.random.default_rng(29 + pieces)
        for _ in range(1000):
            pair = []
            for _ in range(2):
                pts = rng.uniform(0, 10, size=(pieces + 1, 2))
                times = np.concatenate([[0.0], np.cumsum(rng.uniform(1, 5, size=pieces))])
                pair.append(Trajectory(times, pts))
            exact = min_separation(*pair)
            assert sampled_min_separation(*pair, dt=1e-3) >= exact - 1e-6
            assert refined_min_separation(*pair, dt=1e-3) <= exact + 1e-6


class TestProblemInstance:
    """Test suite for instance validation."""

    def test_nonpositive_radius(self):
        """Test that agents need a positive radius."""
        with pytest.raises(InstanceError, match="radius"):
            AgentSpec((100, 100), (200, 200), 0.0)

    def test_overlapping_starts(self, empty_env):
        """Test that two starts closer than the summed radii are rejected."""
        with pytest.raises(InstanceError, match="overlaps") as info:
            ProblemInstance(
                empty_env,
                (AgentSpec((300, 300), (700, 700), 50), AgentSpec((380, 300), (700, 300), 50)),
            )
        assert info.value.agent == 0

    def test_goal_inside_obstacle(self, square_env):
        """Test that a goal inside an obstacle is rejected."""
        with pytest.raises(InstanceError, match="goal"):
            ProblemInstance(square_env, (AgentSpec((100, 100), (500, 500), 20),))

    def test_empty_instance(self, empty_env):
        """Test that an instance needs agents."""
        with pytest.raises(InstanceError, match="no agents"):
            ProblemInstance(empty_env, ())


class TestCheckCf:
    """Test suite for the collision-free predicate."""

    def test_parallel_lanes_are_cf(self, parallel_instance):
        """Test that far-apart straight lines are collision-free."""
        assert check_cf(straight_lines(parallel_instance), parallel_instance)

    def test_margin_tightens_the_check(self, parallel_instance):
        """Test that a large margin turns the same lanes into a violation."""
        report = validate_solution(straight_lines(parallel_instance), parallel_instance, margin=600)
        assert not report.ok

    def test_head_on_swap_collides(self, swap_instance):
        """Test that straight-line swapping reports the colliding pair."""
        report = validate_solution(straight_lines(swap_instance), swap_instance)
        assert not report.ok
        assert report.reason == "agent collision"
        assert report.agents == (0, 1)
        assert report.separation == pytest.approx(0.0, abs=1e-9)
        assert report.time == pytest.approx(200.0)

    def test_obstacle_collision(self, square_env):
        """Test that crossing an obstacle is reported."""
        inst = ProblemInstance(square_env, (AgentSpec((100, 500), (900, 500), 50),))
        report = validate_solution(straight_lines(inst), inst)
        assert report.reason == "obstacle collision"
        assert report.agents == (0,)

    def test_endpoint_mismatch(self, single_agent_instance):
        """Test that a trajectory stopping short of its goal is rejected."""
        tr = Trajectory.line((100, 500), (400, 500), 1.0)
        report = validate_solution([tr], single_agent_instance)
        assert "endpoint mismatch" in report.reason
        assert "agents 0" in report.describe()

    def test_speed_limit_exceeded(self, single_agent_instance):
        """Test that a trajectory faster than the agent's max speed is rejected."""
        tr = Trajectory([0.0, 1.0], [(100, 500), (500, 500)])
        report = validate_solution([tr], single_agent_instance)
        assert not report.ok
        assert report.reason == "speed limit exceeded"
        assert report.agents == (0,)
        assert report.time == 0.0

    def test_speed_limit_reported_before_collisions(self, swap_instance):
        """Test that a colliding teleport is reported as a speed violation."""
        trs = [
            Trajectory([0.0, 0.5], [(300, 500), (700, 500)]),
            Trajectory([0.0, 0.5], [(700, 500), (300, 500)]),
        ]
        assert validate_solution(trs, swap_instance).reason == "speed limit exceeded"

    def test_exact_max_speed_is_allowed(self, empty_env):
        """Test a piece moving at exactly twice unit speed for a fast agent."""
        inst = ProblemInstance(empty_env, (AgentSpec((100, 500), (500, 500), 50, max_speed=2.0),))
        tr = Trajectory([0.0, 100.0, 200.0], [(100, 500), (300, 500), (500, 500)])
        assert check_cf([tr], inst)
        assert not check_cf([Trajectory([0.0, 199.0], [(100, 500), (500, 500)])], inst)

    def test_wrong_trajectory_count(self, parallel_instance):
        """Test that the number of trajectories must match the agents."""
        report = validate_solution(straight_lines(parallel_instance)[:1], parallel_instance)
        assert not report.ok
        assert "expected 2" in report.reason

    def test_valid_report_describe(self, single_agent_instance):
        """Test the description of a valid report."""
        report = validate_solution(straight_lines(single_agent_instance), single_agent_instance)
        assert report.ok
        assert report.describe() == "valid"


class TestSolutionCost:
    """Test suite for the sum-of-arrival-times objective."""

    def test_sum_of_arrivals(self):
        """Test that the cost sums the arrival times."""
        trs = [Trajectory.line((0, 0), (3, 4), 1.0), Trajectory.stationary((9, 9))]
        assert solution_cost(trs) == pytest.approx(5.0)
        assert Solution.from_trajectories(trs).cost == pytest.approx(5.0)
