"""
Time-parameterised piecewise-linear trajectories and the collision-free
(CF) predicate over a set of them.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InstanceError
from .geom import (
    EPS,
    Environment,
    Point,
    as_point,
    disc_free,
    point_segment_distances,
    segments_disc_free,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_SPEED = 1.0

# Slack on the speed limit for floating-point step lengths.
SPEED_TOL = 1e-9


@dataclass(frozen=True)
class AgentSpec:
    """Start, goal, body radius and maximum speed of one disc agent."""

    start: Point
    goal: Point
    radius: float
    max_speed: float = DEFAULT_MAX_SPEED

    def __post_init__(self):
        object.__setattr__(self, "start", as_point(self.start))
        object.__setattr__(self, "goal", as_point(self.goal))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "max_speed", float(self.max_speed))
        if not self.radius > 0.0:
            raise InstanceError(f"radius must be positive, got {self.radius}")
        if not self.max_speed > 0.0:
            raise InstanceError(f"max_speed must be positive, got {self.max_speed}")


@dataclass(frozen=True)
class ProblemInstance:
    """
    An environment plus the ordered agents that must cross it.

    Construction validates that every start and goal is disc-free at the
    agent's radius and that starts (and goals) do not overlap pairwise.
    """

    env: Environment
    agents: Tuple[AgentSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        self.validate()

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def starts(self) -> Tuple[Point, ...]:
        return tuple(a.start for a in self.agents)

    @property
    def goals(self) -> Tuple[Point, ...]:
        return tuple(a.goal for a in self.agents)

    @property
    def radii(self) -> np.ndarray:
        return np.array([a.radius for a in self.agents], dtype=float)

    @property
    def speeds(self) -> np.ndarray:
        return np.array([a.max_speed for a in self.agents], dtype=float)

    def validate(self) -> None:
        """
        Raises:
            InstanceError: If a start or goal collides with the environment
                or two starts (or two goals) overlap.
        """
        if not self.agents:
            raise InstanceError("instance has no agents")
        for i, agent in enumerate(self.agents):
            if not disc_free(agent.start, agent.radius, self.env):
                raise InstanceError("start is not collision-free", agent=i)
            if not disc_free(agent.goal, agent.radius, self.env):
                raise InstanceError("goal is not collision-free", agent=i)
        for label in ("start", "goal"):
            points = [getattr(a, label) for a in self.agents]
            for i in range(self.n):
                for j in range(i + 1, self.n):
                    gap = math.dist(points[i], points[j])
                    if gap <= self.agents[i].radius + self.agents[j].radius:
                        raise InstanceError(
                            f"{label} overlaps the {label} of agent {j}", agent=i
                        )


class Piece(NamedTuple):
    """One constant-velocity piece of a trajectory."""

    start_time: float
    start_point: Point
    velocity: Point


class Trajectory:
    """
    A piecewise-linear path through space-time.

    Stored as strictly increasing breakpoint times starting at 0 and the
    positions at those times. Positions between breakpoints are linear;
    after the last breakpoint the agent stays at its final point forever.
    Trailing breakpoints that repeat the final point are trimmed so that
    ``arrival_time`` is the minimal time after which the agent stays put.
    """

    __slots__ = ("times", "points")

    def __init__(self, times, points):
        times = np.array(times, dtype=float).reshape(-1)
        points = np.array(points, dtype=float).reshape(-1, 2)
        if len(times) == 0 or len(times) != len(points):
            raise ValueError("trajectory needs matching, non-empty times and points")
        if times[0] != 0.0:
            raise ValueError(f"trajectory must start at t=0, got {times[0]}")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("trajectory breakpoint times must strictly increase")
        if not np.all(np.isfinite(points)):
            raise ValueError("trajectory positions must be finite")

        keep = np.ones(len(times), dtype=bool)
        # Interior breakpoints inside a stationary run carry no information.
        if len(times) > 2:
            same_prev = np.all(points[1:-1] == points[:-2], axis=1)
            same_next = np.all(points[1:-1] == points[2:], axis=1)
            keep[1:-1] = ~(same_prev & same_next)
        times, points = times[keep], points[keep]
        end = len(times)
        while end > 1 and np.array_equal(points[end - 2], points[end - 1]):
            end -= 1
        times, points = times[:end].copy(), points[:end].copy()
        times.setflags(write=False)
        points.setflags(write=False)
        self.times = times
        self.points = points

    @classmethod
    def from_breakpoints(cls, breakpoints: Iterable[Sequence[float]]) -> "Trajectory":
        """
        Build a trajectory from ``(t, x, y)`` breakpoints.

        Repeated times are merged when they agree on the position.

        Raises:
            ValueError: If a repeated time carries two different positions.
        """
        times: List[float] = []
        points: List[Tuple[float, float]] = []
        for t, x, y in breakpoints:
            if times and t == times[-1]:
                if (x, y) != points[-1]:
                    raise ValueError(f"discontinuous trajectory at t={t}")
                continue
            times.append(float(t))
            points.append((float(x), float(y)))
        return cls(times, points)

    @classmethod
    def stationary(cls, p) -> "Trajectory":
        return cls([0.0], [p])

    @classmethod
    def line(cls, a, b, speed: float) -> "Trajectory":
        """Straight motion from ``a`` to ``b`` at constant ``speed``, then hold."""
        length = math.dist(a, b)
        if length == 0.0:
            return cls.stationary(a)
        return cls([0.0, length / speed], [a, b])

    @property
    def arrival_time(self) -> float:
        return float(self.times[-1])

    @property
    def start_point(self) -> Point:
        return Point(float(self.points[0, 0]), float(self.points[0, 1]))

    @property
    def final_point(self) -> Point:
        return Point(float(self.points[-1, 0]), float(self.points[-1, 1]))

    @property
    def pieces(self) -> Tuple[Piece, ...]:
        durations = np.diff(self.times)
        velocities = np.diff(self.points, axis=0) / durations[:, None]
        return tuple(
            Piece(float(t), Point(*map(float, p)), Point(*map(float, v)))
            for t, p, v in zip(self.times[:-1], self.points[:-1], velocities)
        )

    def position_at(self, t: float) -> Point:
        x, y = self.positions_at(np.array([t], dtype=float))[0]
        return Point(float(x), float(y))

    def positions_at(self, ts) -> np.ndarray:
        """Positions at an array of times, shape (len(ts), 2)."""
        ts = np.asarray(ts, dtype=float)
        return np.column_stack(
            [
                np.interp(ts, self.times, self.points[:, 0]),
                np.interp(ts, self.times, self.points[:, 1]),
            ]
        )

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def max_speed(self) -> float:
        if len(self.times) == 1:
            return 0.0
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return float(np.max(steps / np.diff(self.times)))

    def shifted(self, delay: float) -> "Trajectory":
        """The same motion started ``delay`` seconds later, holding the start."""
        if delay <= 0.0:
            return self
        return Trajectory(
            np.concatenate([[0.0], self.times + delay]),
            np.vstack([self.points[:1], self.points]),
        )

    def breakpoints(self) -> List[Tuple[float, float, float]]:
        return [
            (float(t), float(p[0]), float(p[1])) for t, p in zip(self.times, self.points)
        ]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(
            self.points, other.points
        )

    def __hash__(self):
        return hash((self.times.tobytes(), self.points.tobytes()))

    def __repr__(self):
        return (
            f"Trajectory({len(self.times)} breakpoints, "
            f"arrival={self.arrival_time:.3f}, final={tuple(self.final_point)})"
        )


def evaluate(tr: Trajectory, t: float) -> Point:
    """Position of ``tr`` at time ``t`` (held at the final point after arrival)."""
    return tr.position_at(t)


def concatenate(parts: Sequence[Trajectory], offsets: Sequence[float]) -> Trajectory:
    """
    Chain trajectory segments that start at the given absolute times.

    Each part must start where the previous one ended; gaps between a part's
    arrival and the next offset are spent waiting.
    """
    breakpoints: List[Tuple[float, float, float]] = []
    for part, offset in zip(parts, offsets):
        for t, x, y in part.breakpoints():
            breakpoints.append((t + offset, x, y))
    return Trajectory.from_breakpoints(breakpoints)


def closest_approach(tr_i: Trajectory, tr_j: Trajectory) -> Tuple[float, float]:
    """
    Minimal inter-agent distance over t in [0, inf) and a time it occurs.

    Between consecutive breakpoints of either trajectory the relative motion
    is linear, so each interval is a point-to-segment distance in the
    relative frame. The constant tail after both arrivals is the last
    interval's endpoint.
    """
    ts = np.union1d(tr_i.times, tr_j.times)
    rel = tr_i.positions_at(ts) - tr_j.positions_at(ts)
    if len(ts) == 1:
        return float(np.linalg.norm(rel[0])), 0.0
    a, b = rel[:-1], rel[1:]
    dists = point_segment_distances(np.zeros(2), a, b)
    k = int(np.argmin(dists))
    ab = b[k] - a[k]
    length_sq = float(ab @ ab)
    s = 0.0 if length_sq == 0.0 else min(1.0, max(0.0, float(-(a[k] @ ab)) / length_sq))
    return float(dists[k]), float(ts[k] + s * (ts[k + 1] - ts[k]))


def min_separation(tr_i: Trajectory, tr_j: Trajectory) -> float:
    """Infimum over all t >= 0 of the distance between the two agents."""
    return closest_approach(tr_i, tr_j)[0]


def solution_cost(trajectories: Sequence[Trajectory]) -> float:
    """Sum of arrival times, the objective being minimised."""
    return float(sum(tr.arrival_time for tr in trajectories))


@dataclass(frozen=True)
class Solution:
    """One trajectory per agent plus the summed arrival time."""

    trajectories: Tuple[Trajectory, ...]
    cost: float

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory]) -> "Solution":
        trajectories = tuple(trajectories)
        return cls(trajectories, solution_cost(trajectories))


@dataclass(frozen=True)
class CfReport:
    """Outcome of validating a set of trajectories against an instance."""

    ok: bool
    reason: str = ""
    agents: Tuple[int, ...] = ()
    time: Optional[float] = None
    separation: Optional[float] = None

    def describe(self) -> str:
        if self.ok:
            return "valid"
        parts = [self.reason]
        if self.agents:
            parts.append("agents " + ", ".join(str(a) for a in self.agents))
        if self.time is not None:
            parts.append(f"t={self.time:.6f}")
        if self.separation is not None:
            parts.append(f"separation={self.separation:.6f}")
        return "; ".join(parts)


def validate_solution(
    trajectories: Sequence[Trajectory], inst: ProblemInstance, margin: float = 0.0
) -> CfReport:
    """
    Check the CF predicate, reporting the first violation found.

    Checks, in order: one trajectory per agent, start and goal endpoints,
    the speed limit on every piece, obstacle clearance of every piece at the
    agent's radius, and pairwise separation strictly above the summed radii
    (plus ``margin``).
    """
    if len(trajectories) != inst.n:
        return CfReport(
            False, f"expected {inst.n} trajectories, got {len(trajectories)}"
        )
    for i, (tr, agent) in enumerate(zip(trajectories, inst.agents)):
        if math.dist(tr.start_point, agent.start) > EPS:
            return CfReport(False, "trajectory does not start at the agent's start", (i,), 0.0)
        if math.dist(tr.final_point, agent.goal) > EPS:
            return CfReport(
                False, "endpoint mismatch: trajectory does not end at the goal", (i,),
                tr.arrival_time,
            )
        if len(tr.times) > 1:
            steps = np.linalg.norm(np.diff(tr.points, axis=0), axis=1)
            durations = np.diff(tr.times)
            fast = steps > (agent.max_speed + SPEED_TOL) * durations + SPEED_TOL
            if fast.any():
                k = int(np.argmax(fast))
                return CfReport(False, "speed limit exceeded", (i,), float(tr.times[k]))

    env = inst.env
    for i, (tr, agent) in enumerate(zip(trajectories, inst.agents)):
        radius = agent.radius + margin
        if len(tr.times) == 1:
            if not disc_free(tr.start_point, radius, env):
                return CfReport(False, "obstacle collision", (i,), 0.0)
            continue
        free = segments_disc_free(tr.points[:-1], tr.points[1:], radius, env)
        if not free.all():
            k = int(np.argmin(free))
            return CfReport(False, "obstacle collision", (i,), float(tr.times[k]))

    for i in range(inst.n):
        for j in range(i + 1, inst.n):
            separation, t = closest_approach(trajectories[i], trajectories[j])
            required = inst.agents[i].radius + inst.agents[j].radius + margin
            if separation <= required:
                return CfReport(False, "agent collision", (i, j), t, separation)
    return CfReport(True)


def check_cf(
    trajectories: Sequence[Trajectory], inst: ProblemInstance, margin: float = 0.0
) -> bool:
    """True iff the trajectories are a collision-free solution of ``inst``."""
    report = validate_solution(trajectories, inst, margin)
    if not report.ok:
        logger.debug("CF check failed: %s", report.describe())
    return report.ok
