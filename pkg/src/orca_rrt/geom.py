"""
Exact 2-d primitives for points, segments and polygons.

All collision tests are strict: a disc of radius ``r`` is free only when its
distance to every obstacle edge is greater than ``r``. The boundary rectangle
behaves like an inward-facing obstacle.
"""

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from .exceptions import GeometryError

# Tolerance for degeneracy decisions (collinearity, on-segment, zero area).
EPS = 1e-9

# Rows per chunk in the vectorised segment tests, bounds temporary arrays.
_CHUNK = 2048


class Point(NamedTuple):
    """A point (or vector) of the plane in world units."""

    x: float
    y: float


def as_point(value) -> Point:
    """Coerce any pair-like value into a Point of floats."""
    x, y = float(value[0]), float(value[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise GeometryError(f"Point coordinates must be finite, got ({x}, {y})")
    return Point(x, y)


def dist_point_segment(p, a, b) -> float:
    """
    Euclidean distance from ``p`` to the closed segment ``ab``.

    A degenerate segment (``a == b``) reduces to the point distance.
    """
    px, py = p
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    length_sq = dx * dx + dy * dy
    if length_sq <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / length_sq
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _cross(ox, oy, ax, ay, bx, by) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def segments_cross(a, b, c, d) -> bool:
    """True iff segments ab and cd cross at a single interior point."""
    o1 = _cross(a[0], a[1], b[0], b[1], c[0], c[1])
    o2 = _cross(a[0], a[1], b[0], b[1], d[0], d[1])
    o3 = _cross(c[0], c[1], d[0], d[1], a[0], a[1])
    o4 = _cross(c[0], c[1], d[0], d[1], b[0], b[1])
    return o1 * o2 < 0.0 and o3 * o4 < 0.0


def dist_segment_segment(a, b, c, d) -> float:
    """Distance between the closed segments ab and cd."""
    if segments_cross(a, b, c, d):
        return 0.0
    return min(
        dist_point_segment(a, c, d),
        dist_point_segment(b, c, d),
        dist_point_segment(c, a, b),
        dist_point_segment(d, a, b),
    )


def point_segment_distances(p, a, b) -> np.ndarray:
    """Vectorised ``dist_point_segment``; broadcasts over leading axes."""
    ab = b - a
    ap = p - a
    length_sq = np.sum(ab * ab, axis=-1)
    nonzero = length_sq > 0.0
    t = np.sum(ap * ab, axis=-1) / np.where(nonzero, length_sq, 1.0)
    t = np.where(nonzero, np.clip(t, 0.0, 1.0), 0.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


def nearest_points_on_segments(p, a, b) -> np.ndarray:
    """Closest point of each segment ``a[k] b[k]`` to ``p``."""
    ab = b - a
    length_sq = np.sum(ab * ab, axis=-1)
    nonzero = length_sq > 0.0
    t = np.sum((p - a) * ab, axis=-1) / np.where(nonzero, length_sq, 1.0)
    t = np.where(nonzero, np.clip(t, 0.0, 1.0), 0.0)
    return a + t[..., None] * ab


def _cross_arrays(u, v) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def segment_distances(a, b, c, d) -> np.ndarray:
    """Vectorised ``dist_segment_segment``; broadcasts over leading axes."""
    dist = np.minimum(
        np.minimum(point_segment_distances(a, c, d), point_segment_distances(b, c, d)),
        np.minimum(point_segment_distances(c, a, b), point_segment_distances(d, a, b)),
    )
    o1 = _cross_arrays(b - a, c - a)
    o2 = _cross_arrays(b - a, d - a)
    o3 = _cross_arrays(d - c, a - c)
    o4 = _cross_arrays(d - c, b - c)
    crossing = (o1 * o2 < 0.0) & (o3 * o4 < 0.0)
    return np.where(crossing, 0.0, dist)


def _crossing_parity(points, starts, ends) -> np.ndarray:
    """Even-odd ray test of every point against a set of closed polylines."""
    px = points[:, None, 0]
    py = points[:, None, 1]
    x1, y1 = starts[None, :, 0], starts[None, :, 1]
    x2, y2 = ends[None, :, 0], ends[None, :, 1]
    straddle = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    hits = straddle & (px < x_at)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


def signed_area(vertices: Sequence[Point]) -> float:
    """Shoelace area, positive for counter-clockwise vertex order."""
    total = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return 0.5 * total


@dataclass(frozen=True)
class Polygon:
    """
    A simple polygon with non-zero area, stored counter-clockwise.

    Orientation is normalised on construction so inside tests are
    unambiguous.
    """

    vertices: Tuple[Point, ...]

    def __post_init__(self):
        vertices = tuple(as_point(v) for v in self.vertices)
        if len(vertices) < 3:
            raise GeometryError(
                f"Polygon needs at least 3 vertices, got {len(vertices)}"
            )
        area = signed_area(vertices)
        if abs(area) <= EPS:
            raise GeometryError("Polygon has zero area")
        if area < 0.0:
            vertices = vertices[::-1]
        object.__setattr__(self, "vertices", vertices)
        if not self._is_simple():
            raise GeometryError("Polygon is self-intersecting")

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    def edges(self):
        """Yield the (start, end) pairs of the boundary in order."""
        n = len(self.vertices)
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]

    def is_convex_vertex(self, i: int) -> bool:
        """True if the interior angle at vertex ``i`` is below 180 degrees."""
        n = len(self.vertices)
        prev_v, v, next_v = (
            self.vertices[i - 1],
            self.vertices[i],
            self.vertices[(i + 1) % n],
        )
        return _cross(prev_v.x, prev_v.y, v.x, v.y, next_v.x, next_v.y) > EPS

    def contains(self, p) -> bool:
        """Closed containment test: boundary points count as inside."""
        for a, b in self.edges():
            if dist_point_segment(p, a, b) <= EPS:
                return True
        inside = False
        px, py = p
        for a, b in self.edges():
            if (a.y > py) != (b.y > py):
                x_at = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y)
                if px < x_at:
                    inside = not inside
        return inside

    def _is_simple(self) -> bool:
        edges = list(self.edges())
        n = len(edges)
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue  # adjacent through the closing vertex
                if dist_segment_segment(*edges[i], *edges[j]) <= EPS:
                    return False
        return True


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, used for environment boundaries."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise GeometryError(f"Degenerate boundary rectangle {self}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def corners(self) -> Tuple[Point, ...]:
        """Counter-clockwise corners starting at the lower left."""
        return (
            Point(self.xmin, self.ymin),
            Point(self.xmax, self.ymin),
            Point(self.xmax, self.ymax),
            Point(self.xmin, self.ymax),
        )

    def contains_disc(self, p, r: float) -> bool:
        x, y = p
        return (
            x - self.xmin > r
            and self.xmax - x > r
            and y - self.ymin > r
            and self.ymax - y > r
        )


@dataclass(frozen=True)
class Environment:
    """
    A boundary rectangle with pairwise non-overlapping polygonal obstacles.

    Obstacles may touch each other but not overlap, and must lie inside the
    boundary.
    """

    boundary: Rect
    obstacles: Tuple[Polygon, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        self.validate()

    def validate(self) -> None:
        """
        Check the environment invariants.

        Raises:
            GeometryError: If an obstacle leaves the boundary or two
                obstacles overlap.
        """
        b = self.boundary
        for k, poly in enumerate(self.obstacles):
            for v in poly.vertices:
                if not (
                    b.xmin - EPS <= v.x <= b.xmax + EPS
                    and b.ymin - EPS <= v.y <= b.ymax + EPS
                ):
                    raise GeometryError(
                        f"Obstacle {k} has vertex ({v.x:g}, {v.y:g}) "
                        f"outside the boundary"
                    )
        for i, first in enumerate(self.obstacles):
            for j in range(i + 1, len(self.obstacles)):
                if _polygons_overlap(first, self.obstacles[j]):
                    raise GeometryError(f"Obstacles {i} and {j} overlap")

    @cached_property
    def edge_starts(self) -> np.ndarray:
        return np.array(
            [a for poly in self.obstacles for a, _ in poly.edges()], dtype=float
        ).reshape(-1, 2)

    @cached_property
    def edge_ends(self) -> np.ndarray:
        return np.array(
            [b for poly in self.obstacles for _, b in poly.edges()], dtype=float
        ).reshape(-1, 2)

    @cached_property
    def wall_starts(self) -> np.ndarray:
        """Obstacle edges followed by the four boundary edges."""
        corners = np.array(self.boundary.corners(), dtype=float)
        return np.vstack([self.edge_starts, corners])

    @cached_property
    def wall_ends(self) -> np.ndarray:
        corners = np.array(self.boundary.corners(), dtype=float)
        return np.vstack([self.edge_ends, np.roll(corners, -1, axis=0)])

    def contains_points(self, points) -> np.ndarray:
        """For each point, whether it lies inside some obstacle."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.obstacles:
            return np.zeros(len(points), dtype=bool)
        return _crossing_parity(points, self.edge_starts, self.edge_ends)

    def geometry_hash(self) -> str:
        """Short content hash of the boundary and obstacle coordinates."""
        b = self.boundary
        payload = {
            "boundary": [b.xmin, b.ymin, b.xmax, b.ymax],
            "obstacles": [
                [[v.x, v.y] for v in poly.vertices] for poly in self.obstacles
            ],
        }
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:12]


def _polygons_overlap(first: Polygon, second: Polygon) -> bool:
    for a, b in first.edges():
        for c, d in second.edges():
            if segments_cross(a, b, c, d):
                return True
    for inner, outer in ((first, second), (second, first)):
        for v in inner.vertices:
            if outer.contains(v) and all(
                dist_point_segment(v, a, b) > EPS for a, b in outer.edges()
            ):
                return True
    return False


def disc_free(p, r: float, env: Environment) -> bool:
    """
    True iff the closed disc of radius ``r`` at ``p`` misses every obstacle
    and stays strictly inside the boundary.
    """
    if not env.boundary.contains_disc(p, r):
        return False
    if not env.obstacles:
        return True
    point = np.asarray(p, dtype=float)
    if point_segment_distances(point, env.edge_starts, env.edge_ends).min() <= r:
        return False
    return not bool(env.contains_points(point)[0])


def segments_disc_free(starts, ends, r, env: Environment) -> np.ndarray:
    """
    Vectorised ``swept_disc_free`` over many segments.

    Args:
        starts: Array-like of shape (M, 2) with segment start points
        ends: Array-like of shape (M, 2) with segment end points
        r: Disc radius, or one radius per segment
        env: The environment

    Returns:
        np.ndarray: Boolean array of shape (M,)
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    r = np.broadcast_to(np.asarray(r, dtype=float), (len(starts),))
    b = env.boundary
    lo = np.column_stack([b.xmin + r, b.ymin + r])
    hi = np.column_stack([b.xmax - r, b.ymax - r])
    free = np.all((starts > lo) & (starts < hi) & (ends > lo) & (ends < hi), axis=1)
    if not env.obstacles or len(starts) == 0:
        return free

    edge_a = env.edge_starts[None, :, :]
    edge_b = env.edge_ends[None, :, :]
    for lo_row in range(0, len(starts), _CHUNK):
        rows = slice(lo_row, lo_row + _CHUNK)
        dist = segment_distances(
            starts[rows, None, :], ends[rows, None, :], edge_a, edge_b
        ).min(axis=1)
        free[rows] &= dist > r[rows]
    free &= ~env.contains_points(starts)
    free &= ~env.contains_points(ends)
    return free


def swept_disc_free(a, b, r: float, env: Environment) -> bool:
    """
    True iff a disc of radius ``r`` moving along segment ``ab`` stays free.

    Exact: uses analytic segment-segment distances, no time discretisation.
    """
    return bool(segments_disc_free([a], [b], r, env)[0])


def nearest_wall_points(p, env: Environment):
    """
    Nearest point on every obstacle and boundary edge.

    ``p`` is one point or an array of shape (N, 2); the results then gain a
    leading axis of length N.

    Returns:
        tuple: (points array of shape (W, 2), distances array of shape (W,))
    """
    point = np.asarray(p, dtype=float)[..., None, :]
    nearest = nearest_points_on_segments(point, env.wall_starts, env.wall_ends)
    return nearest, np.linalg.norm(point - nearest, axis=-1)
