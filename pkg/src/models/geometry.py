"""Geometry value types: obstacles, worlds and labelled region grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, TypeAlias

import numpy as np
from scipy import ndimage

from src.shared.constants import CELL_FREE, CELL_OCCUPIED
from src.shared.exceptions import ArgumentError

Vec2: TypeAlias = tuple[float, float]
Vec3: TypeAlias = tuple[float, float, float]


def _segments_cross(p1: np.ndarray, p2: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> bool:
    """Proper intersection test for two segments (shared endpoints do not count)."""

    def orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
        return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


@dataclass(frozen=True)
class Circle2:
    """Planar circle."""

    center: Vec2
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ArgumentError(f"Circle radius must be positive, got {self.radius}")

    def contains(self, point: np.ndarray) -> bool:
        return math.dist(self.center, (float(point[0]), float(point[1]))) < self.radius


@dataclass(frozen=True)
class PolyObstacle:
    """Closed simple polygon, optionally in uniform linear motion."""

    vertices: tuple[Vec2, ...]
    velocity: Vec2 = (0.0, 0.0)

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise ArgumentError(f"Polygon needs at least 3 vertices, got {len(self.vertices)}")
        pts = np.asarray(self.vertices, dtype=float)
        if not np.all(np.isfinite(pts)):
            raise ArgumentError("Polygon vertices must be finite")
        n = len(pts)
        for i in range(n):
            for j in range(i + 1, n):
                # Adjacent edges share a vertex
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                    raise ArgumentError("Polygon outline intersects itself")

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def is_moving(self) -> bool:
        return any(v != 0.0 for v in self.velocity)

    def translated(self, offset: np.ndarray) -> PolyObstacle:
        shifted = self.points + np.asarray(offset, dtype=float)
        return PolyObstacle(tuple(map(tuple, shifted.tolist())), self.velocity)  # type: ignore[arg-type]

    def at_time(self, t: float) -> PolyObstacle:
        return self.translated(np.asarray(self.velocity) * t) if self.is_moving else self

    def outline(self) -> np.ndarray:
        return self.points


@dataclass(frozen=True)
class DiskObstacle:
    """Disk, optionally in uniform linear motion."""

    center: Vec2
    radius: float
    velocity: Vec2 = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ArgumentError(f"Disk radius must be positive, got {self.radius}")

    @property
    def centroid(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def is_moving(self) -> bool:
        return any(v != 0.0 for v in self.velocity)

    def translated(self, offset: np.ndarray) -> DiskObstacle:
        c = self.centroid + np.asarray(offset, dtype=float)
        return DiskObstacle((float(c[0]), float(c[1])), self.radius, self.velocity)

    def at_time(self, t: float) -> DiskObstacle:
        return self.translated(np.asarray(self.velocity) * t) if self.is_moving else self

    def outline(self, segments: int = 48) -> np.ndarray:
        angles = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
        return self.centroid + self.radius * np.column_stack([np.cos(angles), np.sin(angles)])


Obstacle2: TypeAlias = PolyObstacle | DiskObstacle


@dataclass(frozen=True)
class BoxObstacle3:
    """Axis-aligned box, optionally in uniform linear motion."""

    minimum: Vec3
    maximum: Vec3
    velocity: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if any(hi <= lo for lo, hi in zip(self.minimum, self.maximum, strict=True)):
            raise ArgumentError(f"Box maximum must exceed minimum: {self.minimum} / {self.maximum}")

    @property
    def centroid(self) -> np.ndarray:
        return (np.asarray(self.minimum) + np.asarray(self.maximum)) / 2.0

    @property
    def is_moving(self) -> bool:
        return any(v != 0.0 for v in self.velocity)

    def at_time(self, t: float) -> BoxObstacle3:
        if not self.is_moving:
            return self
        shift = np.asarray(self.velocity) * t
        lo = np.asarray(self.minimum) + shift
        hi = np.asarray(self.maximum) + shift
        return BoxObstacle3(tuple(lo.tolist()), tuple(hi.tolist()), self.velocity)  # type: ignore[arg-type]


@dataclass(frozen=True)
class PrismObstacle:
    """Planar obstacle extruded vertically from the ground."""

    base: Obstacle2
    height: float

    @property
    def centroid(self) -> np.ndarray:
        return self.base.centroid

    @property
    def is_moving(self) -> bool:
        return self.base.is_moving

    def at_time(self, t: float) -> PrismObstacle:
        return PrismObstacle(self.base.at_time(t), self.height) if self.is_moving else self


Obstacle3: TypeAlias = BoxObstacle3 | PrismObstacle


@dataclass(frozen=True)
class World2D:
    """Planar world: rectangular bounds (treated as walls) plus obstacles."""

    bounds: tuple[float, float, float, float]
    obstacles: tuple[Obstacle2, ...] = ()
    cell_size: float = 0.1

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = self.bounds
        if xmax <= xmin or ymax <= ymin:
            raise ArgumentError(f"Degenerate world bounds {self.bounds}")
        if not self.cell_size > 0:
            raise ArgumentError(f"cell_size must be positive, got {self.cell_size}")

    @property
    def has_moving_obstacles(self) -> bool:
        return any(o.is_moving for o in self.obstacles)

    def at_time(self, t: float) -> World2D:
        if not self.has_moving_obstacles:
            return self
        return World2D(self.bounds, tuple(o.at_time(t) for o in self.obstacles), self.cell_size)


@dataclass(frozen=True)
class World3D:
    """Box-shaped room (walls, floor and ceiling) plus obstacles."""

    bounds: tuple[float, float, float, float, float, float]
    obstacles: tuple[Obstacle3, ...] = ()
    cell_size: float = 0.2

    def __post_init__(self) -> None:
        lo, hi = self.bounds[:3], self.bounds[3:]
        if any(h <= lo_ for lo_, h in zip(lo, hi, strict=True)):
            raise ArgumentError(f"Degenerate world bounds {self.bounds}")
        if not self.cell_size > 0:
            raise ArgumentError(f"cell_size must be positive, got {self.cell_size}")

    @property
    def has_moving_obstacles(self) -> bool:
        return any(o.is_moving for o in self.obstacles)

    def at_time(self, t: float) -> World3D:
        if not self.has_moving_obstacles:
            return self
        return World3D(self.bounds, tuple(o.at_time(t) for o in self.obstacles), self.cell_size)

    def ground(self) -> World2D:
        """Planar footprint at floor level (prisms and boxes touching the floor)."""
        xmin, ymin, zmin, xmax, ymax, _ = self.bounds
        footprint: list[Obstacle2] = []
        for obstacle in self.obstacles:
            if isinstance(obstacle, PrismObstacle):
                footprint.append(obstacle.base)
            elif obstacle.minimum[2] <= zmin + self.cell_size:
                (x0, y0, _), (x1, y1, _) = obstacle.minimum, obstacle.maximum
                footprint.append(
                    PolyObstacle(((x0, y0), (x1, y0), (x1, y1), (x0, y1)), obstacle.velocity[:2])
                )
        return World2D((xmin, ymin, xmax, ymax), tuple(footprint), self.cell_size)


class ClearanceQuery(NamedTuple):
    """Vectorized clearance lookup result.

    ``toward`` holds unit vectors pointing from each query point toward the
    nearest non-free cell; for points already inside the non-free set it points
    away from the nearest free cell.
    """

    distance: np.ndarray
    toward: np.ndarray
    inside: np.ndarray
    in_bounds: np.ndarray


class _DistanceFields(NamedTuple):
    clearance: np.ndarray  # cells, centre to nearest non-free centre
    nearest_blocked: np.ndarray  # (D, *shape) indices, may lie in the one-cell border
    depth: np.ndarray  # cells, centre to nearest free centre
    nearest_free: np.ndarray


@dataclass(eq=False)
class RegionGrid:
    """Uniform 2D or 3D grid of cell labels (unknown / free / occupied).

    Cells outside the grid count as non-free. Distance fields are computed
    lazily and cached; call :meth:`invalidate` after mutating ``labels``.
    """

    origin: np.ndarray
    cell_size: float
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=float)
        if not self.cell_size > 0:
            raise ArgumentError(f"cell_size must be positive, got {self.cell_size}")
        if self.origin.shape != (self.labels.ndim,):
            raise ArgumentError(
                f"Origin has {self.origin.shape[0]} axes but labels have {self.labels.ndim}"
            )
        self.labels = np.asarray(self.labels, dtype=np.int8)

    @property
    def ndim(self) -> int:
        return self.labels.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.labels.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.shape) * self.cell_size

    @property
    def free_mask(self) -> np.ndarray:
        return self.labels == CELL_FREE

    @property
    def cell_volume(self) -> float:
        return self.cell_size**self.ndim

    def free_volume(self) -> float:
        return float(np.count_nonzero(self.free_mask)) * self.cell_volume

    def with_labels(self, labels: np.ndarray) -> RegionGrid:
        return RegionGrid(self.origin.copy(), self.cell_size, labels, dict(self.meta))

    def copy(self) -> RegionGrid:
        return self.with_labels(self.labels.copy())

    def invalidate(self) -> None:
        self.__dict__.pop("_fields", None)

    # Index helpers
    def cell_index(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((points - self.origin) / self.cell_size).astype(np.int64)

    def index_in_bounds(self, idx: np.ndarray) -> np.ndarray:
        return np.all((idx >= 0) & (idx < np.asarray(self.shape)), axis=1)

    def cell_centers(self, idx: np.ndarray) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.cell_size

    def all_cell_centers(self) -> np.ndarray:
        """Cell centres as an array shaped ``(*shape, ndim)``."""
        axes = [self.origin[d] + (np.arange(n) + 0.5) * self.cell_size for d, n in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def labels_at(self, points: np.ndarray) -> np.ndarray:
        """Label per point; out-of-bounds points read as occupied."""
        idx = self.cell_index(points)
        inside = self.index_in_bounds(idx)
        out = np.full(len(idx), CELL_OCCUPIED, dtype=np.int8)
        if np.any(inside):
            out[inside] = self.labels[tuple(idx[inside].T)]
        return out

    def is_free(self, points: np.ndarray) -> np.ndarray:
        return self.labels_at(points) == CELL_FREE

    # Distance fields
    @cached_property
    def _fields(self) -> _DistanceFields:
        free = np.pad(self.free_mask, 1, constant_values=False)
        clearance, blocked_idx = ndimage.distance_transform_edt(free, return_indices=True)
        inner = tuple(slice(1, -1) for _ in range(self.ndim))
        clearance = clearance[inner]
        blocked_idx = blocked_idx[(slice(None), *inner)] - 1
        if np.any(free):
            depth, free_idx = ndimage.distance_transform_edt(~free, return_indices=True)
            depth = depth[inner]
            free_idx = free_idx[(slice(None), *inner)] - 1
        else:
            depth = np.full(self.shape, np.inf)
            free_idx = np.indices(self.shape)
        return _DistanceFields(clearance, blocked_idx, depth, free_idx)

    @property
    def clearance_cells(self) -> np.ndarray:
        """Per-cell centre distance (in cells) to the nearest non-free cell centre."""
        return self._fields.clearance

    @property
    def depth_cells(self) -> np.ndarray:
        """Per-cell centre distance (in cells) to the nearest free cell centre."""
        return self._fields.depth

    def query(self, points: np.ndarray) -> ClearanceQuery:
        """Clearance to the non-free set for each point.

        Free points measure from the point to the boundary of the nearest
        non-free cell (centre distance minus half a cell).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self.cell_index(points)
        in_bounds = self.index_in_bounds(idx)
        clipped = np.clip(idx, 0, np.asarray(self.shape) - 1)
        key = tuple(clipped.T)
        fields = self._fields
        free = in_bounds & (self.labels[key] == CELL_FREE)

        blocked = self.cell_centers(np.stack([fields.nearest_blocked[d][key] for d in range(self.ndim)], axis=1))
        escape = self.cell_centers(np.stack([fields.nearest_free[d][key] for d in range(self.ndim)], axis=1))

        toward = np.where(free[:, None], blocked - points, points - escape)
        norms = np.linalg.norm(toward, axis=1)
        degenerate = norms < 1e-12
        if np.any(degenerate):
            # Query point sits on the centre of its nearest free cell
            toward[degenerate] = points[degenerate] - self.cell_centers(clipped[degenerate])
            norms[degenerate] = np.linalg.norm(toward[degenerate], axis=1)
            still = norms < 1e-12
            toward[still] = np.eye(self.ndim)[0]
            norms[still] = 1.0
        toward = toward / norms[:, None]

        distance = np.zeros(len(points))
        distance[free] = np.maximum(np.linalg.norm(blocked[free] - points[free], axis=1) - 0.5 * self.cell_size, 0.0)
        return ClearanceQuery(distance, toward, ~free, in_bounds)


@dataclass(frozen=True)
class AssumptionViolation:
    """One failed world assumption, reported as data."""

    code: str
    message: str
    location: tuple[float, ...] | None = None


@dataclass(frozen=True)
class AssumptionContext:
    """Robot and margin parameters that world assumptions are checked against.

    ``poses`` hold planar ``(x, y, theta)`` starts; 3D starts are given as
    ``(x, y, z)`` and skip the initial-circle check. ``obstacle_speed_bound``
    (beta = V_max / v_r) tightens the curvature bound for moving obstacles.
    """

    safety_margin: float
    r_min: float
    speed: float
    poses: tuple[tuple[float, ...], ...] = ()
    targets: tuple[tuple[float, ...], ...] = ()
    v_max: float = 0.0
    obstacle_speed_bound: bool = False
    circle_margin: float | None = None
    require_margin_over_radius: bool = False

    def __post_init__(self) -> None:
        if not self.safety_margin > 0:
            raise ArgumentError(f"Safety margin must be positive, got {self.safety_margin}")
        if not (self.r_min > 0 and self.speed > 0):
            raise ArgumentError("Turning radius and speed must be positive")

    @property
    def beta(self) -> float:
        return self.v_max / self.speed

    @property
    def curvature_bound(self) -> float:
        scale = (1.0 + self.beta) if self.obstacle_speed_bound else 1.0
        return 1.0 / (scale * self.r_min)
