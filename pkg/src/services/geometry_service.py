"""Region rasterization, distance queries, enlargement/reduction and world assumption checks."""

import logging
import math
from itertools import combinations
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from skimage import draw, measure

from src.models.geometry import (
    AssumptionContext,
    AssumptionViolation,
    DiskObstacle,
    Obstacle2,
    Obstacle3,
    PolyObstacle,
    PrismObstacle,
    RegionGrid,
    World2D,
    World3D,
)
from src.shared.constants import (
    CELL_FREE,
    CELL_OCCUPIED,
    CURVATURE_TOLERANCE,
    SEGMENT_SAMPLES_PER_CELL,
)
from src.shared.exceptions import ArgumentError

logger = logging.getLogger(__name__)

CIRCLE_CHECK_SAMPLES = 72


class SetDistance(NamedTuple):
    """Distance to the non-free set; ``out_of_bounds`` marks a clamped query."""

    distance: float
    out_of_bounds: bool


class GeometryService:
    """Service for region grids built from worlds and the set operations on them."""

    # ------------------------------------------------------------------
    # Rasterization
    # ------------------------------------------------------------------

    @staticmethod
    def empty_grid(lower: np.ndarray, upper: np.ndarray, cell_size: float) -> RegionGrid:
        """Free grid covering the axis-aligned box ``lower``..``upper``."""
        lower = np.asarray(lower, dtype=float)
        extent = np.asarray(upper, dtype=float) - lower
        shape = tuple(max(int(math.ceil(e / cell_size - 1e-9)), 1) for e in extent)
        return RegionGrid(lower, cell_size, np.full(shape, CELL_FREE, dtype=np.int8))

    @staticmethod
    def obstacle_mask(grid: RegionGrid, obstacle: Obstacle2 | Obstacle3) -> np.ndarray:
        """Boolean mask of the cells whose centres lie inside the obstacle."""
        mask = np.zeros(grid.shape, dtype=bool)
        if isinstance(obstacle, (PolyObstacle, DiskObstacle)):
            mask2 = _planar_mask(obstacle, grid.origin[:2], grid.cell_size, grid.shape[:2])
            if grid.ndim == 2:
                return mask2
            mask[mask2] = True
            return mask
        if isinstance(obstacle, PrismObstacle):
            mask2 = _planar_mask(obstacle.base, grid.origin[:2], grid.cell_size, grid.shape[:2])
            top = _last_center_index(obstacle.height + grid.origin[2], grid.origin[2], grid.cell_size)
            top = min(top, grid.shape[2] - 1)
            if top >= 0:
                mask[:, :, : top + 1] = mask2[:, :, None]
            return mask
        lo = np.asarray(obstacle.minimum, dtype=float)
        hi = np.asarray(obstacle.maximum, dtype=float)
        first = np.ceil((lo - grid.origin) / grid.cell_size - 0.5).astype(int)
        last = np.floor((hi - grid.origin) / grid.cell_size - 0.5).astype(int)
        first = np.clip(first, 0, np.asarray(grid.shape))
        last = np.clip(last, -1, np.asarray(grid.shape) - 1)
        if np.all(last >= first):
            mask[tuple(slice(f, l_ + 1) for f, l_ in zip(first, last, strict=True))] = True
        return mask

    @staticmethod
    def rasterize(world: World2D | World3D, cell_size: float | None = None) -> RegionGrid:
        """Label grid of a world: obstacle cells occupied, everything else free.

        The world boundary acts as a wall because cells outside the grid read
        as non-free.
        """
        cell = cell_size or world.cell_size
        half = len(world.bounds) // 2
        grid = GeometryService.empty_grid(np.asarray(world.bounds[:half]), np.asarray(world.bounds[half:]), cell)
        labels = grid.labels
        for obstacle in world.obstacles:
            labels[GeometryService.obstacle_mask(grid, obstacle)] = CELL_OCCUPIED
        grid.meta["source"] = "world"
        return grid

    @staticmethod
    def obstacle_masks(world: World2D | World3D, grid: RegionGrid) -> list[np.ndarray]:
        return [GeometryService.obstacle_mask(grid, o) for o in world.obstacles]

    # ------------------------------------------------------------------
    # Distance and set operations
    # ------------------------------------------------------------------

    @staticmethod
    def distance_to_set(region: RegionGrid, point: np.ndarray) -> SetDistance:
        """
        Minimum distance from a point to the region's non-free set.

        Args:
            region: Labelled grid
            point: Query point (2D or 3D to match the grid)

        Returns:
            SetDistance with 0 inside the non-free set; out-of-bounds points
            return 0 with ``out_of_bounds`` set
        """
        result = region.query(np.asarray(point, dtype=float)[None, :])
        if not bool(result.in_bounds[0]):
            logger.debug(f"Distance query outside grid bounds at {tuple(np.round(point, 3))}")
            return SetDistance(0.0, True)
        return SetDistance(float(result.distance[0]), False)

    @staticmethod
    def boundary_distance(region: RegionGrid) -> np.ndarray:
        """Per-cell distance (meters) from free cell centres to the non-free boundary."""
        return np.maximum(region.clearance_cells - 0.5, 0.0) * region.cell_size

    @staticmethod
    def enlarge(region: RegionGrid, d: float) -> RegionGrid:
        """Grow the non-free set by ``d``: free cells within ``d`` of it become occupied."""
        if d < 0:
            raise ArgumentError(f"Enlargement distance must be non-negative, got {d}")
        labels = region.labels.copy()
        if d > 0:
            band = (labels == CELL_FREE) & (GeometryService.boundary_distance(region) <= d)
            labels[band] = CELL_OCCUPIED
        return region.with_labels(labels)

    @staticmethod
    def reduce(region: RegionGrid, d: float) -> RegionGrid:
        """Shrink the free set: keep free cells at least ``d`` from its boundary."""
        if d < 0:
            raise ArgumentError(f"Reduction distance must be non-negative, got {d}")
        labels = region.labels.copy()
        if d > 0:
            labels[(labels == CELL_FREE) & (GeometryService.boundary_distance(region) < d)] = CELL_OCCUPIED
        return region.with_labels(labels)

    @staticmethod
    def segment_samples(region: RegionGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        length = float(np.linalg.norm(b - a))
        count = max(int(math.ceil(length * SEGMENT_SAMPLES_PER_CELL / region.cell_size)), 1) + 1
        t = np.linspace(0.0, 1.0, count)[:, None]
        return a + t * (b - a)

    @staticmethod
    def segment_clear(
        region: RegionGrid, a: np.ndarray, b: np.ndarray, tolerance: float = 0.0
    ) -> bool:
        """
        Whether the segment a-b stays in free cells.

        A sample lying exactly on a cell face is checked against both cells,
        so a segment grazing a blocked cell counts as blocked.

        Args:
            region: Labelled grid
            a: Segment start
            b: Segment end
            tolerance: Allow in-bounds non-free samples this close to free space
        """
        samples = GeometryService.segment_samples(region, a, b)
        if tolerance > 0:
            idx = region.cell_index(samples)
            inb = region.index_in_bounds(idx)
            if not np.all(inb):
                return False
            key = tuple(idx.T)
            free = region.labels[key] == CELL_FREE
            depth = (region.depth_cells[key] - 0.5) * region.cell_size
            return bool(np.all(free | (depth <= tolerance)))

        eps = 1e-9 * region.cell_size
        probes = [samples]
        for axis in range(region.ndim):
            offset = np.zeros(region.ndim)
            offset[axis] = eps
            probes.extend([samples + offset, samples - offset])
        return bool(np.all(region.is_free(np.concatenate(probes))))

    @staticmethod
    def obstacle_distance(obstacle: Obstacle2, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Exact distance from points to a planar obstacle.

        Returns:
            Tuple of (distance, toward, inside). ``toward`` is a unit vector
            pointing into the obstacle: toward the nearest boundary point from
            outside, away from it from inside.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if isinstance(obstacle, DiskObstacle):
            rel = obstacle.centroid - points
            r = np.linalg.norm(rel, axis=1)
            toward = _unit_rows(rel, r)
            inside = r < obstacle.radius
            return np.maximum(r - obstacle.radius, 0.0), toward, inside

        a = obstacle.points
        ab = np.roll(a, -1, axis=0) - a
        ap = points[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nek,ek->ne", ap, ab) / np.einsum("ek,ek->e", ab, ab), 0.0, 1.0)
        closest = a[None, :, :] + t[..., None] * ab[None, :, :]
        gaps = np.linalg.norm(points[:, None, :] - closest, axis=2)
        nearest = np.argmin(gaps, axis=1)
        rows = np.arange(len(points))
        dist = gaps[rows, nearest]
        near = closest[rows, nearest]
        inside = measure.points_in_poly(points, a)
        rel = np.where(inside[:, None], points - near, near - points)
        toward = _unit_rows(rel, np.linalg.norm(rel, axis=1))
        return np.where(inside, 0.0, dist), toward, inside

    @staticmethod
    def bounds_distance(
        bounds: tuple[float, float, float, float], points: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distance from points to the walls of a rectangular world, same convention as obstacle_distance."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(bounds[:2], dtype=float)
        hi = np.asarray(bounds[2:], dtype=float)
        gaps = np.column_stack([points - lo, hi - points])
        axis = np.argmin(gaps, axis=1)
        dist = gaps[np.arange(len(points)), axis]
        outward = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        toward = outward[axis]
        clamped = np.clip(points, lo, hi)
        outside = np.any(points != clamped, axis=1)
        if np.any(outside):
            rel = points[outside] - clamped[outside]
            toward[outside] = _unit_rows(rel, np.linalg.norm(rel, axis=1))
        return np.where(outside, 0.0, np.maximum(dist, 0.0)), toward, outside

    @staticmethod
    def world_clearance(world: World2D, points: np.ndarray) -> np.ndarray:
        """Exact distance from each point to the nearest obstacle or wall."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        best, _, _ = GeometryService.bounds_distance(world.bounds, points)
        for obstacle in world.obstacles:
            dist, _, _ = GeometryService.obstacle_distance(obstacle, points)
            best = np.minimum(best, dist)
        return best

    # ------------------------------------------------------------------
    # Polylines
    # ------------------------------------------------------------------

    @staticmethod
    def resample_polyline(points: np.ndarray, spacing: float, closed: bool = False) -> np.ndarray:
        """Points at arc-length multiples of ``spacing`` along a polyline, starting at its first point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if closed:
            points = np.vstack([points, points[:1]])
        if len(points) < 2:
            return points.copy()
        seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        total = float(arc[-1])
        if total == 0.0:
            return points[:1].copy()
        stations = np.arange(0.0, total + 1e-9 * spacing, spacing)
        out = np.column_stack([np.interp(stations, arc, points[:, d]) for d in range(points.shape[1])])
        out[0] = points[0]
        return out

    @staticmethod
    def triple_curvature(points: np.ndarray) -> np.ndarray:
        """Curvature (1 / circumradius) of each consecutive point triple."""
        a, b, c = points[:-2], points[1:-1], points[2:]
        ab = np.linalg.norm(b - a, axis=1)
        bc = np.linalg.norm(c - b, axis=1)
        ca = np.linalg.norm(a - c, axis=1)
        u, w = b - a, c - b
        if points.shape[1] == 2:
            area2 = np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
        else:
            area2 = np.linalg.norm(np.cross(u, w), axis=1)
        denom = ab * bc * ca
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, 2.0 * area2 / denom, np.inf)

    # ------------------------------------------------------------------
    # World assumptions
    # ------------------------------------------------------------------

    @staticmethod
    def validate_scenario(
        world: World2D | World3D, context: AssumptionContext
    ) -> list[AssumptionViolation]:
        """
        Check a world against the planning assumptions.

        Checks disjoint safety-margin enlargements, initial circles inside
        the reduced free space, curvature of the offset obstacle boundaries,
        obstacle speed below robot speed, free start and target positions
        and, when requested, safety margin at least the turning radius.

        Args:
            world: Planar or spatial world
            context: Margins, robot parameters, starts and targets

        Returns:
            Violations as data; empty iff compliant
        """
        violations: list[AssumptionViolation] = []
        grid = GeometryService.rasterize(world)
        masks = GeometryService.obstacle_masks(world, grid)
        d_s = context.safety_margin
        cell = grid.cell_size

        for (i, mask_i), (j, mask_j) in combinations(enumerate(masks), 2):
            gap = _mask_gap(mask_i, mask_j, cell)
            if gap is not None and gap <= 2.0 * d_s:
                where = (world.obstacles[i].centroid + world.obstacles[j].centroid) / 2.0
                violations.append(
                    AssumptionViolation(
                        "enlargements_overlap",
                        f"Obstacles {i} and {j} are {gap:.3f} m apart; need more than {2 * d_s:.3f} m",
                        tuple(float(v) for v in where),
                    )
                )

        circle_margin = context.circle_margin if context.circle_margin is not None else d_s
        for r, pose in enumerate(context.poses):
            position = np.asarray(pose[: grid.ndim], dtype=float)
            start = GeometryService.distance_to_set(grid, position)
            if start.out_of_bounds or start.distance <= 0.0:
                violations.append(
                    AssumptionViolation("start_blocked", f"Robot {r} starts outside free space", tuple(pose))
                )
                continue
            if grid.ndim == 2 and len(pose) >= 3:
                worst = _initial_circle_clearance(grid, pose, context.r_min)
                if worst < circle_margin - cell:
                    violations.append(
                        AssumptionViolation(
                            "initial_circle_unsafe",
                            f"Robot {r} initial circles come within {worst:.3f} m of obstacles; "
                            f"need {circle_margin:.3f} m",
                            tuple(pose),
                        )
                    )
            elif start.distance < d_s - cell:
                violations.append(
                    AssumptionViolation(
                        "start_unsafe", f"Robot {r} starts {start.distance:.3f} m from obstacles", tuple(pose)
                    )
                )

        for r, target in enumerate(context.targets):
            reach = GeometryService.distance_to_set(grid, np.asarray(target, dtype=float))
            if reach.out_of_bounds or reach.distance < d_s - cell:
                violations.append(
                    AssumptionViolation(
                        "target_unsafe",
                        f"Target {r} lies within {d_s:.3f} m of obstacles or outside the world",
                        tuple(target),
                    )
                )

        planar = world if isinstance(world, World2D) else world.ground()
        violations.extend(_curvature_violations(planar, context))

        fastest = max(
            [float(np.linalg.norm(o.velocity)) for o in _planar_or_spatial(world)] + [context.v_max]
        )
        if fastest >= context.speed:
            violations.append(
                AssumptionViolation(
                    "obstacle_too_fast",
                    f"Obstacle speed bound {fastest:.3f} m/s is not below robot speed {context.speed:.3f} m/s",
                )
            )

        if context.require_margin_over_radius and d_s < context.r_min:
            violations.append(
                AssumptionViolation(
                    "margin_below_turn_radius",
                    f"Safety margin {d_s:.3f} m is below the minimum turning radius {context.r_min:.3f} m",
                )
            )

        if violations:
            logger.warning(f"World violates {len(violations)} planning assumption(s)")
            for v in violations:
                logger.debug(f"  [{v.code}] {v.message}")
        else:
            logger.debug("World satisfies all planning assumptions")
        return violations


def _planar_mask(
    obstacle: Obstacle2, origin: np.ndarray, cell: float, shape: tuple[int, ...]
) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    if isinstance(obstacle, DiskObstacle):
        center = (obstacle.centroid - origin) / cell - 0.5
        rr, cc = draw.disk((center[0], center[1]), obstacle.radius / cell, shape=shape)
    else:
        idx = (obstacle.points - origin) / cell - 0.5
        rr, cc = draw.polygon(idx[:, 0], idx[:, 1], shape=shape)
    mask[rr, cc] = True
    return mask


def _unit_rows(vectors: np.ndarray, norms: np.ndarray) -> np.ndarray:
    out = np.tile(np.eye(vectors.shape[1])[0], (len(vectors), 1))
    ok = norms > 1e-12
    out[ok] = vectors[ok] / norms[ok, None]
    return out


def _last_center_index(top: float, origin: float, cell: float) -> int:
    return int(math.floor((top - origin) / cell - 0.5))


def _mask_gap(mask_a: np.ndarray, mask_b: np.ndarray, cell: float) -> float | None:
    """Boundary-to-boundary gap between two rasterized obstacles."""
    if not (mask_a.any() and mask_b.any()):
        return None
    dist = ndimage.distance_transform_edt(~mask_a, sampling=cell)
    return max(float(dist[mask_b].min()) - cell, 0.0)


def _initial_circle_clearance(grid: RegionGrid, pose: tuple[float, ...], r_min: float) -> float:
    x, y, theta = pose[:3]
    normal = np.array([-math.sin(theta), math.cos(theta)])
    angles = np.linspace(0.0, 2.0 * math.pi, CIRCLE_CHECK_SAMPLES, endpoint=False)
    ring = r_min * np.column_stack([np.cos(angles), np.sin(angles)])
    worst = math.inf
    for side in (1.0, -1.0):
        center = np.array([x, y]) + side * r_min * normal
        result = grid.query(center + ring)
        dist = np.where(result.in_bounds & ~result.inside, result.distance, 0.0)
        worst = min(worst, float(dist.min()))
    return worst


def _curvature_violations(world: World2D, context: AssumptionContext) -> list[AssumptionViolation]:
    """Sampled curvature of the safety-margin offset of all obstacles (walls excluded)."""
    if not world.obstacles:
        return []
    grid = GeometryService.empty_grid(
        np.asarray(world.bounds[:2]), np.asarray(world.bounds[2:]), world.cell_size
    )
    union = np.zeros(grid.shape, dtype=bool)
    for obstacle in world.obstacles:
        union |= GeometryService.obstacle_mask(grid, obstacle)
    if not union.any():
        return []

    cell = grid.cell_size
    field = ndimage.distance_transform_edt(~union, sampling=cell) - 0.5 * cell
    bound = context.curvature_bound * (1.0 + CURVATURE_TOLERANCE)
    spacing = max(0.5 * context.r_min, 4.0 * cell)
    out: list[AssumptionViolation] = []
    for contour in measure.find_contours(field, level=context.safety_margin):
        closed = bool(np.allclose(contour[0], contour[-1]))
        points = grid.origin + (contour + 0.5) * cell
        samples = GeometryService.resample_polyline(points[:-1] if closed else points, spacing, closed=closed)
        if len(samples) < 3:
            continue
        if closed:
            samples = np.vstack([samples[-1:], samples, samples[:1]])
        curvature = GeometryService.triple_curvature(samples)
        worst = int(np.argmax(curvature))
        if curvature[worst] > bound:
            where = samples[worst + 1]
            out.append(
                AssumptionViolation(
                    "boundary_curvature",
                    f"Offset boundary curvature {curvature[worst]:.3f} 1/m exceeds "
                    f"{context.curvature_bound:.3f} 1/m",
                    (float(where[0]), float(where[1])),
                )
            )
    return out


def _planar_or_spatial(world: World2D | World3D) -> list[Obstacle2 | Obstacle3]:
    obstacles: list[Obstacle2 | Obstacle3] = []
    for o in world.obstacles:
        obstacles.append(o.base if isinstance(o, PrismObstacle) else o)
    return obstacles


# Global service instance
geometry_service = GeometryService()
