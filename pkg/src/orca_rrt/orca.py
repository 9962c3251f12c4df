"""
Optimal Reciprocal Collision Avoidance (ORCA) simulation.

Each agent turns every other agent into a half-plane of permitted velocities,
adds hard half-planes for nearby walls and solves a small linear program for
the permitted velocity closest to its preferred one. All agents then move one
step simultaneously.
"""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .geom import (
    EPS,
    Environment,
    Point,
    as_point,
    nearest_wall_points,
    point_segment_distances,
    segments_disc_free,
)
from .traj import ProblemInstance, Trajectory
from .visnav import GoalField, GraphCache

logger = logging.getLogger(__name__)

# Parallel-line threshold inside the linear program.
LP_EPS = 1e-9

# Clearance beyond contact that every accepted step keeps, from walls and
# between agents, over the whole step.
HOLD_EPS = 1e-6


class HalfPlane(NamedTuple):
    """
    One linear velocity constraint: v is permitted iff (v - point) . normal >= 0.
    """

    point: Point
    normal: Point

    @property
    def direction(self) -> Point:
        """Boundary direction with the permitted side on its left."""
        return Point(self.normal.y, -self.normal.x)

    def margin(self, v) -> float:
        """Signed slack of ``v``; negative values are violations."""
        return (v[0] - self.point.x) * self.normal.x + (v[1] - self.point.y) * self.normal.y

    def contains(self, v, tol: float = 0.0) -> bool:
        return self.margin(v) >= -tol


class SimStatus(Enum):
    REACHED = "reached"
    STEP_LIMIT = "step_limit"


@dataclass(frozen=True)
class SimParams:
    """
    Simulator parameters.

    ``max_steps=None`` bounds a run at ``step_factor`` times the slowest
    agent's ideal travel time. ``stall_time`` ends a run early once the
    summed remaining path length has stopped shrinking for that long
    (simulated seconds).
    """

    dt: float = 0.25
    tau_agent: float = 10.0
    tau_obstacle: float = 5.0
    arrive_eps: float = 1.0
    max_steps: Optional[int] = None
    step_factor: float = 10.0
    stall_time: Optional[float] = 100.0
    seed: int = 0

    def __post_init__(self):
        for name in ("dt", "tau_agent", "tau_obstacle", "arrive_eps", "step_factor"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"SimParams.{name} must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("SimParams.max_steps must be positive")
        if self.stall_time is not None and self.stall_time <= 0.0:
            raise ValueError("SimParams.stall_time must be positive")

    @classmethod
    def from_mapping(cls, mapping) -> "SimParams":
        """Build params from a config mapping, ignoring None values."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"Unknown simulator parameters: {', '.join(sorted(unknown))}")
        return cls(**{k: v for k, v in mapping.items() if v is not None})

    def check_instance(self, inst: ProblemInstance) -> None:
        if self.arrive_eps >= float(inst.radii.min()):
            raise ValueError("arrive_eps must be smaller than every agent radius")


@dataclass(frozen=True)
class SimOutcome:
    trajectories: Tuple[Trajectory, ...]
    status: SimStatus
    steps: int

    @property
    def reached(self) -> bool:
        return self.status is SimStatus.REACHED


def _avoidance(rel_x, rel_y, vel_x, vel_y, combined, tau, dt):
    """
    Smallest change ``u`` of the relative velocity leaving the truncated
    velocity obstacle, plus the direction of the obstacle boundary there.

    Swapping the two agents negates every returned component exactly.
    """
    dist_sq = rel_x * rel_x + rel_y * rel_y
    combined_sq = combined * combined

    if dist_sq > combined_sq:
        inv_tau = 1.0 / tau
        w_x, w_y = vel_x - inv_tau * rel_x, vel_y - inv_tau * rel_y
        w_len_sq = w_x * w_x + w_y * w_y
        dot = w_x * rel_x + w_y * rel_y
        if dot < 0.0 and dot * dot > combined_sq * w_len_sq:
            # Closest boundary point lies on the cut-off circle.
            w_len = math.sqrt(w_len_sq)
            unit_x, unit_y = w_x / w_len, w_y / w_len
            dir_x, dir_y = unit_y, -unit_x
            scale = combined * inv_tau - w_len
            u_x, u_y = scale * unit_x, scale * unit_y
        else:
            # Closest boundary point lies on one of the cone legs.
            leg = math.sqrt(dist_sq - combined_sq)
            if rel_x * w_y - rel_y * w_x > 0.0:
                dir_x = (rel_x * leg - rel_y * combined) / dist_sq
                dir_y = (rel_x * combined + rel_y * leg) / dist_sq
            else:
                dir_x = -(rel_x * leg + rel_y * combined) / dist_sq
                dir_y = -(-rel_x * combined + rel_y * leg) / dist_sq
            proj = vel_x * dir_x + vel_y * dir_y
            u_x, u_y = proj * dir_x - vel_x, proj * dir_y - vel_y
    else:
        inv_dt = 1.0 / dt
        w_x, w_y = vel_x - inv_dt * rel_x, vel_y - inv_dt * rel_y
        w_len = math.hypot(w_x, w_y)
        unit_x, unit_y = w_x / w_len, w_y / w_len
        dir_x, dir_y = unit_y, -unit_x
        scale = combined * inv_dt - w_len
        u_x, u_y = scale * unit_x, scale * unit_y
    return u_x, u_y, dir_x, dir_y


def agent_halfplane(pA, vA, rA, pB, vB, rB, tau: float, dt: float) -> HalfPlane:
    """
    The half-plane agent A must respect to avoid agent B for ``tau`` seconds.

    A takes half of the smallest velocity change that leaves the truncated
    velocity obstacle. Already overlapping agents use the one-step horizon.

    Raises:
        ValueError: If the two positions coincide.
    """
    rel_x, rel_y = pB[0] - pA[0], pB[1] - pA[1]
    if rel_x * rel_x + rel_y * rel_y == 0.0:
        raise ValueError("agent_halfplane needs distinct positions")
    u_x, u_y, dir_x, dir_y = _avoidance(
        rel_x, rel_y, vA[0] - vB[0], vA[1] - vB[1], rA + rB, tau, dt
    )
    point = Point(vA[0] + 0.5 * u_x, vA[1] + 0.5 * u_y)
    return HalfPlane(point, Point(-dir_y, dir_x))


def obstacle_halfplanes(
    p, r: float, env: Environment, tau_obs: float, vmax: float
) -> List[HalfPlane]:
    """
    Hard constraints keeping the disc off every wall within reach.

    One half-plane per obstacle or boundary edge closer than
    ``r + vmax * tau_obs``: the speed toward the edge's nearest point may
    not exceed ``clearance / tau_obs``. Walls take no share of the avoidance.
    """
    nearest, dist = nearest_wall_points(p, env)
    reach = r + vmax * tau_obs
    px, py = float(p[0]), float(p[1])
    planes = []
    for (qx, qy), d in zip(nearest, dist):
        if d > reach or d <= 0.0:
            continue
        n_x, n_y = (px - qx) / d, (py - qy) / d
        limit = (d - r) / tau_obs
        planes.append(HalfPlane(Point(-n_x * limit, -n_y * limit), Point(n_x, n_y)))
    return planes


def _det(ax, ay, bx, by):
    return ax * by - ay * bx


def _lp1(lines, line_no, radius, opt, direction_opt):
    px, py, dx, dy = lines[line_no]
    dot = px * dx + py * dy
    discriminant = dot * dot + radius * radius - (px * px + py * py)
    if discriminant < 0.0:
        # The speed disc lies entirely outside this constraint.
        return None
    root = math.sqrt(discriminant)
    t_left, t_right = -dot - root, -dot + root
    for i in range(line_no):
        qx, qy, ex, ey = lines[i]
        denominator = _det(dx, dy, ex, ey)
        numerator = _det(ex, ey, px - qx, py - qy)
        if abs(denominator) <= LP_EPS:
            if numerator < 0.0:
                return None
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    ox, oy = opt
    if direction_opt:
        t = t_right if ox * dx + oy * dy > 0.0 else t_left
    else:
        t = min(max(dx * (ox - px) + dy * (oy - py), t_left), t_right)
    return (px + t * dx, py + t * dy)


def _lp2(lines, radius, opt, direction_opt):
    ox, oy = opt
    if direction_opt:
        result = (ox * radius, oy * radius)
    elif ox * ox + oy * oy > radius * radius:
        norm = math.hypot(ox, oy)
        result = (ox / norm * radius, oy / norm * radius)
    else:
        result = (ox, oy)

    for i, (px, py, dx, dy) in enumerate(lines):
        if _det(dx, dy, px - result[0], py - result[1]) > 0.0:
            candidate = _lp1(lines, i, radius, opt, direction_opt)
            if candidate is None:
                return i, result
            result = candidate
    return len(lines), result


def _lp3(lines, num_hard, begin, radius, result):
    distance = 0.0
    for i in range(begin, len(lines)):
        px, py, dx, dy = lines[i]
        if _det(dx, dy, px - result[0], py - result[1]) > distance:
            projected = list(lines[:num_hard])
            for j in range(num_hard, i):
                qx, qy, ex, ey = lines[j]
                determinant = _det(dx, dy, ex, ey)
                if abs(determinant) <= LP_EPS:
                    if dx * ex + dy * ey > 0.0:
                        continue  # same direction, already covered
                    point = (0.5 * (px + qx), 0.5 * (py + qy))
                else:
                    t = _det(ex, ey, px - qx, py - qy) / determinant
                    point = (px + t * dx, py + t * dy)
                nx, ny = ex - dx, ey - dy
                norm = math.hypot(nx, ny)
                projected.append((point[0], point[1], nx / norm, ny / norm))
            fail, candidate = _lp2(projected, radius, (-dy, dx), True)
            if fail == len(projected):
                result = candidate
            distance = _det(dx, dy, px - result[0], py - result[1])
    return result


def _solve_lines(hard, soft, opt, vmax, rng):
    """
    The LP over constraint lines ``(px, py, dx, dy)``, permitted side on
    the left of the direction ``(dx, dy)``.
    """
    if rng is not None:
        hard = [hard[k] for k in rng.permutation(len(hard))]
        soft = [soft[k] for k in rng.permutation(len(soft))]
    if hard:
        fail, _ = _lp2(hard, vmax, opt, False)
        if fail < len(hard):
            return (0.0, 0.0)
    lines = hard + soft
    fail, result = _lp2(lines, vmax, opt, False)
    if fail < len(lines):
        result = _lp3(lines, len(hard), fail, vmax, result)
    return result


def solve_velocity(
    constraints: Sequence[HalfPlane],
    v_pref,
    vmax: float,
    num_hard: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> Point:
    """
    Permitted velocity closest to ``v_pref`` inside the speed disc.

    Args:
        constraints: Half-planes; the first ``num_hard`` are obstacle
            constraints that are never relaxed
        v_pref: Preferred velocity
        vmax: Speed limit (radius of the velocity disc)
        num_hard: Number of leading hard constraints
        rng: When given, constraints are processed in a random order

    Returns:
        Point: The optimal velocity. If the soft constraints cannot all be
            met, the velocity minimising the largest soft violation; if even
            the hard constraints admit nothing, zero (a jammed agent).
    """
    if vmax <= 0.0:
        raise ValueError(f"vmax must be positive, got {vmax}")
    lines = [(hp.point[0], hp.point[1], hp.normal[1], -hp.normal[0]) for hp in constraints]
    opt = (float(v_pref[0]), float(v_pref[1]))
    result = _solve_lines(lines[:num_hard], lines[num_hard:], opt, vmax, rng)
    return Point(float(result[0]), float(result[1]))


def _wall_lines(pos, radii, speeds, env: Environment, tau_obs: float):
    """
    ``obstacle_halfplanes`` for every agent at once, as LP lines.

    Returns:
        tuple: (one list of lines per agent, each agent's clearance from
            its nearest wall beyond its radius)
    """
    nearest, dist = nearest_wall_points(pos, env)
    clearance = dist.min(axis=1) - radii
    active = (dist <= (radii + speeds * tau_obs)[:, None]) & (dist > 0.0)
    safe = np.where(active, dist, 1.0)
    normals = (pos[:, None, :] - nearest) / safe[..., None]
    limits = (safe - radii[:, None]) / tau_obs
    lines = []
    for i in range(len(pos)):
        k = np.flatnonzero(active[i])
        n_x, n_y = normals[i, k, 0], normals[i, k, 1]
        lines.append(
            list(
                zip(
                    (-n_x * limits[i, k]).tolist(),
                    (-n_y * limits[i, k]).tolist(),
                    n_y.tolist(),
                    (-n_x).tolist(),
                )
            )
        )
    return lines, clearance


def _agent_lines(pos, vel, radii, tau: float, dt: float):
    """``agent_halfplane`` for every ordered pair, as LP lines per agent."""
    n = len(pos)
    p, v, r = pos.tolist(), vel.tolist(), radii.tolist()
    lines: List[list] = [[] for _ in range(n)]
    for i in range(n):
        pi, vi = p[i], v[i]
        for j in range(i + 1, n):
            pj, vj = p[j], v[j]
            u_x, u_y, dir_x, dir_y = _avoidance(
                pj[0] - pi[0], pj[1] - pi[1], vi[0] - vj[0], vi[1] - vj[1], r[i] + r[j], tau, dt
            )
            lines[i].append((vi[0] + 0.5 * u_x, vi[1] + 0.5 * u_y, dir_x, dir_y))
            lines[j].append((vj[0] - 0.5 * u_x, vj[1] - 0.5 * u_y, -dir_x, -dir_y))
    return lines


def _preferred_velocities(pos, targets, speeds, dt):
    offsets = targets - pos
    dist = np.linalg.norm(offsets, axis=1)
    speed = np.minimum(speeds, dist / dt)
    scale = np.divide(speed, dist, out=np.zeros_like(dist), where=dist > 0.0)
    return offsets * scale[:, None]


class _Waypoints:
    """
    Each agent's current visibility-graph waypoint toward its goal.

    Moving straight at a waypoint keeps the best route running through it,
    so the full visibility scan only runs once the waypoint is reached or an
    agent was pushed off course and lost sight of it. An agent pushed off
    course also switches to its goal as soon as the goal is in sight.
    """

    def __init__(self, fields: Sequence[GoalField], pos: np.ndarray, radii: np.ndarray, env):
        self.fields = fields
        self.radii = radii
        self.env = env
        n = len(fields)
        self.goals = np.array([f.goal for f in fields], dtype=float).reshape(n, 2)
        self.targets = np.array(pos, dtype=float)
        self.beyond = np.full(n, math.inf)
        self.homing = np.zeros(n, dtype=bool)
        for i in range(n):
            self._refresh(i, pos[i])

    def _refresh(self, i: int, p) -> None:
        waypoint, beyond = self.fields[i].waypoint(p)
        if waypoint is None:
            self.targets[i] = p
            self.beyond[i] = math.inf
            self.homing[i] = False
            return
        self.targets[i] = waypoint
        self.beyond[i] = beyond
        self.homing[i] = waypoint == self.fields[i].goal

    def remaining(self, pos) -> np.ndarray:
        """Path length left per agent via the current waypoints."""
        return np.linalg.norm(self.targets - pos, axis=1) + self.beyond

    def update(self, pos: np.ndarray, off_course: np.ndarray) -> None:
        n = len(pos)
        reached = ~self.homing & (np.linalg.norm(self.targets - pos, axis=1) <= EPS)
        check = np.flatnonzero(off_course & ~reached)
        away = check[~self.homing[check]]
        if len(check):
            visible = segments_disc_free(
                np.concatenate([pos[check], pos[away]]),
                np.concatenate([self.targets[check], self.goals[away]]),
                np.concatenate([self.radii[check], self.radii[away]]),
                self.env,
            )
            sees_target = dict(zip(check.tolist(), visible[: len(check)].tolist()))
            sees_goal = dict(zip(away.tolist(), visible[len(check):].tolist()))
        else:
            sees_target, sees_goal = {}, {}
        for i in range(n):
            if sees_goal.get(i):
                self.targets[i] = self.goals[i]
                self.beyond[i] = 0.0
                self.homing[i] = True
            elif reached[i] or not sees_target.get(i, True) or not math.isfinite(self.beyond[i]):
                self._refresh(i, pos[i])


def _hold_unsafe(
    pos: np.ndarray,
    cand: np.ndarray,
    radii: np.ndarray,
    env: Environment,
    clearance: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Keep in place every agent whose step would come within ``HOLD_EPS`` of
    a wall or another agent.

    ``clearance`` (distance from each agent's disc to its nearest wall)
    lets steps that are shorter than it skip the exact wall test. Holding
    everyone is always safe because the current joint state is.
    """
    cand = cand.copy()
    n = len(pos)
    steps = np.linalg.norm(cand - pos, axis=1)
    check = steps > 0.0
    if clearance is not None:
        check &= steps + HOLD_EPS >= clearance
    if check.any():
        rows = np.flatnonzero(check)
        free = segments_disc_free(pos[rows], cand[rows], radii[rows] + HOLD_EPS, env)
        blocked = rows[~free]
        cand[blocked] = pos[blocked]

    required = radii[:, None] + radii[None, :] + HOLD_EPS
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    rel_start = pos[:, None, :] - pos[None, :, :]
    for _ in range(n + 1):
        moving = np.any(cand != pos, axis=1)
        if not moving.any():
            break
        rel_end = cand[:, None, :] - cand[None, :, :]
        gaps = point_segment_distances(np.zeros(2), rel_start, rel_end)
        clash = (gaps <= required) & upper & (moving[:, None] | moving[None, :])
        if not clash.any():
            break
        rows, cols = np.nonzero(clash)
        cand[rows] = pos[rows]
        cand[cols] = pos[cols]
    return cand


def simulate(
    inst: ProblemInstance,
    starts: Sequence,
    goals: Sequence,
    params: SimParams = SimParams(),
    graphs: Optional[GraphCache] = None,
    deadline: Optional[float] = None,
) -> SimOutcome:
    """
    Run ORCA from ``starts`` to ``goals`` in the environment of ``inst``.

    Every agent steers toward the first visibility-graph waypoint on its
    way to the goal, all agents integrate one ``dt`` together, and an agent
    that could reach its goal this step at full speed and ends within
    ``arrive_eps`` of it snaps onto it.

    Args:
        inst: Supplies the environment and the agents' radii and speeds
        starts: One start position per agent
        goals: One goal position per agent
        params: Simulator parameters
        graphs: Visibility graph cache to reuse (built on demand otherwise)
        deadline: Optional ``time.perf_counter()`` value; reaching it ends
            the run as StepLimit

    Returns:
        SimOutcome: Trajectories and Reached or StepLimit
    """
    graphs = graphs or GraphCache(inst.env)
    n = inst.n
    radii = inst.radii
    speeds = inst.speeds
    dt = params.dt
    env = inst.env
    pos = np.array([as_point(p) for p in starts], dtype=float)
    goal_arr = np.array([as_point(g) for g in goals], dtype=float)
    vel = np.zeros_like(pos)
    fields = [graphs.goal_field(radii[i], goal_arr[i]) for i in range(n)]
    waypoints = _Waypoints(fields, pos, radii, env)

    remaining = waypoints.remaining(pos)
    history = [pos.copy()]
    if not np.all(np.isfinite(remaining)):
        logger.debug("ORCA: some agent has no route to its goal")
        return _outcome(history, dt, SimStatus.STEP_LIMIT, 0)

    if params.max_steps is not None:
        max_steps = params.max_steps
    else:
        makespan = float(np.max(remaining / speeds))
        max_steps = max(1, math.ceil(params.step_factor * makespan / dt))
    stall_steps = math.ceil(params.stall_time / dt) if params.stall_time else None
    rng = np.random.default_rng(params.seed)
    speed_list = speeds.tolist()
    snap_reach = speeds * dt

    best_remaining = float(remaining.sum())
    last_progress = 0
    status = SimStatus.STEP_LIMIT
    step = 0
    while True:
        if np.array_equal(pos, goal_arr):
            status = SimStatus.REACHED
            break
        if step >= max_steps:
            break
        if deadline is not None and time.perf_counter() > deadline:
            logger.debug("ORCA: wall-clock deadline hit at step %d", step)
            break

        total = float(remaining.sum())
        if total < best_remaining - params.arrive_eps:
            best_remaining = total
            last_progress = step
        elif stall_steps is not None and step - last_progress >= stall_steps:
            logger.debug("ORCA: no progress for %d steps, stopping", stall_steps)
            break

        prefs = _preferred_velocities(pos, waypoints.targets, speeds, dt)
        hard, clearance = _wall_lines(pos, radii, speeds, env, params.tau_obstacle)
        soft = _agent_lines(pos, vel, radii, params.tau_agent, dt)
        pref_list = prefs.tolist()
        new_vel = np.array(
            [
                _solve_lines(hard[i], soft[i], pref_list[i], speed_list[i], rng)
                for i in range(n)
            ],
            dtype=float,
        )

        cand = pos + new_vel * dt
        snap = (np.linalg.norm(pos - goal_arr, axis=1) <= snap_reach) & (
            np.linalg.norm(cand - goal_arr, axis=1) <= params.arrive_eps
        )
        cand[snap] = goal_arr[snap]
        cand = _hold_unsafe(pos, cand, radii, env, clearance)

        moved = np.any(cand != pos, axis=1)
        off_course = moved & ~np.all(new_vel == prefs, axis=1)
        vel = (cand - pos) / dt
        pos = cand
        step += 1
        history.append(pos.copy())
        waypoints.update(pos, off_course | snap)
        remaining = waypoints.remaining(pos)

    logger.debug("ORCA: %s after %d steps", status.value, step)
    return _outcome(history, dt, status, step)


def _outcome(history, dt, status, steps) -> SimOutcome:
    stacked = np.array(history)
    times = np.arange(len(history), dtype=float) * dt
    trajectories = tuple(Trajectory(times, stacked[:, i, :]) for i in range(stacked.shape[1]))
    return SimOutcome(trajectories, status, steps)
