"""Range finder and depth camera simulation, free-space fusion and incremental map building."""

import logging
import math

import numpy as np
from scipy import ndimage
from skimage import draw

from src.models.geometry import RegionGrid
from src.models.sensing import DepthCamera3D, Scan, SensorNode2D, ShrinkParams
from src.services.geometry_service import geometry_service
from src.shared.constants import (
    CELL_FREE,
    CELL_OCCUPIED,
    CELL_UNKNOWN,
    MAP_MARGIN_CELLS,
    SEGMENT_SAMPLES_PER_CELL,
)
from src.shared.exceptions import ArgumentError

logger = logging.getLogger(__name__)

RAY_CHUNK = 256


class SensingService:
    """Service for simulated sensing and the maps built from it."""

    # ------------------------------------------------------------------
    # Ray casting
    # ------------------------------------------------------------------

    @staticmethod
    def cast_rays(
        truth: RegionGrid, origin: np.ndarray, directions: np.ndarray, max_range: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        March rays through a ground-truth grid.

        Args:
            truth: Grid whose non-free cells (and the outside) stop rays
            origin: Ray origin
            directions: Unit ray directions, shape (N, D)
            max_range: Maximum range

        Returns:
            Tuple of (ranges, max_range_flags); a hit range is the parameter
            of the first non-free sample, so the hit point lies in the hit cell
        """
        origin = np.asarray(origin, dtype=float)
        step = truth.cell_size / SEGMENT_SAMPLES_PER_CELL
        t = np.arange(1, int(math.ceil(max_range / step)) + 1) * step
        t[-1] = min(t[-1], max_range)
        ranges = np.full(len(directions), max_range)
        flags = np.ones(len(directions), dtype=bool)
        for lo in range(0, len(directions), RAY_CHUNK):
            chunk = directions[lo : lo + RAY_CHUNK]
            points = origin + t[None, :, None] * chunk[:, None, :]
            blocked = ~truth.is_free(points.reshape(-1, truth.ndim)).reshape(len(chunk), len(t))
            hit = blocked.any(axis=1)
            first = np.argmax(blocked, axis=1)
            ranges[lo : lo + RAY_CHUNK][hit] = t[first[hit]]
            flags[lo : lo + RAY_CHUNK][hit] = False
        return ranges, flags

    @staticmethod
    def add_range_noise(
        ranges: np.ndarray, flags: np.ndarray, sigma: float, max_range: float, rng: np.random.Generator | None
    ) -> np.ndarray:
        """Zero-mean Gaussian noise on hit ranges, kept within (0, max_range]."""
        if sigma <= 0 or rng is None:
            return ranges
        noisy = ranges + rng.normal(0.0, sigma, size=ranges.shape)
        noisy = np.clip(noisy, 1e-6, max_range)
        return np.where(flags, ranges, noisy)

    @staticmethod
    def raycast_scan(
        truth: RegionGrid,
        node: SensorNode2D,
        noise_sigma: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Scan:
        """
        Planar scan from a sensor node against obstacles and the world boundary.

        Rays with no hit within range read the range with the max-range flag set.
        """
        angles = node.ray_angles()
        world = angles + node.theta
        directions = np.column_stack([np.cos(world), np.sin(world)])
        ranges, flags = SensingService.cast_rays(truth, node.position, directions, node.range)
        ranges = SensingService.add_range_noise(ranges, flags, noise_sigma, node.range, rng)
        return Scan(angles, ranges, flags)

    # ------------------------------------------------------------------
    # Sensor-network fusion
    # ------------------------------------------------------------------

    @staticmethod
    def observed_free_mask(template: RegionGrid, node: SensorNode2D, scan: Scan) -> np.ndarray:
        """Cells whose centres lie in front of the first return of the bracketing rays."""
        centers = template.all_cell_centers().reshape(-1, 2)
        rel = centers - node.position
        dist = np.linalg.norm(rel, axis=1)
        bearing = np.arctan2(rel[:, 1], rel[:, 0]) - node.theta
        bearing = (bearing + math.pi) % (2.0 * math.pi) - math.pi

        angles = scan.angles
        order = np.argsort(angles)
        angles = angles[order]
        ranges = scan.ranges[order]
        pos = np.searchsorted(angles, bearing)
        if node.full_circle:
            below = (pos - 1) % len(angles)
            above = pos % len(angles)
            inside_fov = np.ones(len(centers), dtype=bool)
        else:
            below = np.clip(pos - 1, 0, len(angles) - 1)
            above = np.clip(pos, 0, len(angles) - 1)
            inside_fov = (bearing >= angles[0]) & (bearing <= angles[-1])
        reach = np.minimum(ranges[below], ranges[above]) - template.cell_size
        free = inside_fov & (dist < reach)
        return free.reshape(template.shape)

    @staticmethod
    def fuse_unoccupied_area(
        observations: list[tuple[SensorNode2D, Scan]],
        template: RegionGrid,
        robot_positions: np.ndarray | None = None,
        robot_radius: float = 0.0,
    ) -> RegionGrid:
        """
        Unoccupied area: union of observed-free regions minus all robot disks.

        Args:
            observations: Sensor nodes with their scans
            template: Grid geometry to fuse onto
            robot_positions: Robot centres to subtract, shape (M, 2)
            robot_radius: Radius of each robot disk

        Returns:
            Grid with observed cells free, robot disks occupied, the rest unknown
        """
        if not observations:
            raise ArgumentError("Fusion needs at least one scan")
        free = np.zeros(template.shape, dtype=bool)
        for node, scan in observations:
            free |= SensingService.observed_free_mask(template, node, scan)
        labels = np.where(free, CELL_FREE, CELL_UNKNOWN).astype(np.int8)
        if robot_positions is not None and robot_radius > 0:
            labels[SensingService.sphere_mask(template, robot_positions, robot_radius)] = CELL_OCCUPIED
        fused = template.with_labels(labels)
        fused.meta["source"] = "fusion"
        logger.debug(f"Fused {len(observations)} scan(s): free area {fused.free_volume():.2f} m^2")
        return fused

    @staticmethod
    def sphere_mask(template: RegionGrid, centers: np.ndarray, radius: float) -> np.ndarray:
        """Cells whose centres lie strictly within ``radius`` of any centre."""
        mask = np.zeros(template.shape, dtype=bool)
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if len(centers) == 0 or radius <= 0:
            return mask
        cells = template.all_cell_centers()
        for c in centers:
            mask |= np.linalg.norm(cells - c, axis=-1) < radius
        return mask

    @staticmethod
    def shrink_for_time(area: RegionGrid, k: int, params: ShrinkParams) -> RegionGrid:
        """Reduce the unoccupied area by min(k, T) * delta * V_max."""
        if k < 0:
            raise ArgumentError(f"Step index must be non-negative, got {k}")
        return geometry_service.reduce(area, params.reduction(k))

    # ------------------------------------------------------------------
    # Incremental maps
    # ------------------------------------------------------------------

    @staticmethod
    def padded_truth(truth: RegionGrid, margin: int = MAP_MARGIN_CELLS, pad_below: bool = True) -> RegionGrid:
        """Ground truth padded with an occupied margin so boundary hits land inside the map."""
        pad = [(margin, margin)] * truth.ndim
        if truth.ndim == 3 and not pad_below:
            pad[2] = (0, margin)
        labels = np.pad(truth.labels, pad, constant_values=CELL_OCCUPIED)
        origin = truth.origin - np.array([p[0] for p in pad]) * truth.cell_size
        return RegionGrid(origin, truth.cell_size, labels, {"source": "truth"})

    @staticmethod
    def new_map(truth: RegionGrid) -> RegionGrid:
        """All-unknown map with the geometry of a (padded) ground-truth grid."""
        return truth.with_labels(np.full(truth.shape, CELL_UNKNOWN, dtype=np.int8))

    @staticmethod
    def ray_cells(grid: RegionGrid, start: np.ndarray, end: np.ndarray) -> np.ndarray:
        """Line traversal cells from the cell of ``start`` to the cell of ``end`` (inclusive)."""
        a = grid.cell_index(start)[0]
        b = grid.cell_index(end)[0]
        if grid.ndim == 2:
            rr, cc = draw.line(int(a[0]), int(a[1]), int(b[0]), int(b[1]))
            return np.column_stack([rr, cc])
        coords = draw.line_nd(a, b, endpoint=True)
        return np.column_stack(coords)

    @staticmethod
    def apply_rays(grid: RegionGrid, origin: np.ndarray, endpoints: np.ndarray, hits: np.ndarray) -> RegionGrid:
        """
        Apply the cell state machine for a batch of rays.

        Traversed unknown cells become free; hit endpoints become occupied.
        Max-range rays free their whole traversal. Cells never return to
        unknown and occupied cells never become free.
        """
        traversed: list[np.ndarray] = []
        ends: list[np.ndarray] = []
        shape = np.asarray(grid.shape)
        for end, hit in zip(endpoints, hits, strict=True):
            cells = SensingService.ray_cells(grid, origin, end)
            if hit:
                ends.append(cells[-1:])
                cells = cells[:-1]
            traversed.append(cells)
        labels = grid.labels
        if traversed:
            cells = np.concatenate(traversed)
            cells = cells[np.all((cells >= 0) & (cells < shape), axis=1)]
            key = tuple(cells.T)
            labels[key] = np.where(labels[key] == CELL_UNKNOWN, CELL_FREE, labels[key])
        if ends:
            cells = np.concatenate(ends)
            cells = cells[np.all((cells >= 0) & (cells < shape), axis=1)]
            labels[tuple(cells.T)] = CELL_OCCUPIED
        grid.invalidate()
        return grid

    @staticmethod
    def grid_update_from_scan(grid: RegionGrid, pose: tuple[float, float, float], scan: Scan) -> RegionGrid:
        """
        Update an occupancy grid in place from a planar scan taken at ``pose``.

        Args:
            grid: Three-state occupancy grid
            pose: Estimated robot pose (x, y, theta)
            scan: Scan in the robot frame

        Returns:
            The same grid, updated
        """
        x, y, theta = pose
        origin = np.array([x, y])
        world = scan.angles + theta
        endpoints = origin + scan.ranges[:, None] * np.column_stack([np.cos(world), np.sin(world)])
        return SensingService.apply_rays(grid, origin, endpoints, ~scan.max_range)

    @staticmethod
    def frontier_mask(grid: RegionGrid) -> np.ndarray:
        """Free cells 8-adjacent (26-adjacent in 3D) to an unknown cell."""
        unknown = grid.labels == CELL_UNKNOWN
        structure = np.ones((3,) * grid.ndim, dtype=bool)
        near_unknown = ndimage.binary_dilation(unknown, structure=structure, border_value=0)
        return near_unknown & (grid.labels == CELL_FREE)

    @staticmethod
    def map_complete(grid: RegionGrid) -> bool:
        """True iff the map has free cells and none of them borders unknown space."""
        if not np.any(grid.labels == CELL_FREE):
            return False
        return not bool(SensingService.frontier_mask(grid).any())

    # ------------------------------------------------------------------
    # Depth cameras
    # ------------------------------------------------------------------

    @staticmethod
    def render_depth(
        truth: RegionGrid,
        camera: DepthCamera3D,
        noise_sigma: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """
        Z-depth image by ray marching through a 3D ground-truth grid.

        Pixels with no return within the working range read ``max_range``.
        """
        rays = SensingService.world_rays(camera).reshape(-1, 3)
        scale = np.linalg.norm(rays, axis=1)
        ranges, flags = SensingService.cast_rays(
            truth, np.asarray(camera.position, dtype=float), rays / scale[:, None], camera.max_range * scale.max()
        )
        depth = ranges / scale
        depth = np.where(flags | (depth >= camera.max_range), camera.max_range, depth)
        depth = SensingService.add_range_noise(depth, depth >= camera.max_range, noise_sigma, camera.max_range, rng)
        return depth.reshape(camera.height, camera.width)

    @staticmethod
    def world_rays(camera: DepthCamera3D) -> np.ndarray:
        """World-frame pixel rays with unit forward component, shape (H, W, 3); z-depth is the ray parameter."""
        return camera.pixel_rays() @ camera.rotation.T

    @staticmethod
    def valid_pixels(camera: DepthCamera3D, depth: np.ndarray) -> np.ndarray:
        return np.isfinite(depth) & (depth > camera.min_range) & (depth < camera.max_range)

    @staticmethod
    def carve_limits(camera: DepthCamera3D, depth: np.ndarray) -> np.ndarray:
        """
        Per-pixel z-depth up to which a depth image shows empty space.

        Valid pixels carve up to their return and max-range pixels up to the
        working range. Pixels at or below the minimum range carve nothing:
        something is closer than the camera can measure.
        """
        limit = np.where(SensingService.valid_pixels(camera, depth), depth, 0.0)
        return np.where(depth >= camera.max_range, camera.max_range, limit)

    @staticmethod
    def sphere_entry_depth(camera: DepthCamera3D, centers: np.ndarray, radius: float) -> np.ndarray:
        """Z-depth at which each pixel ray first enters any sphere; inf for rays missing all of them."""
        rays = SensingService.world_rays(camera).reshape(-1, 3)
        entry = np.full(len(rays), np.inf)
        origin = np.asarray(camera.position, dtype=float)
        aa = np.einsum("ij,ij->i", rays, rays)
        for center in np.atleast_2d(np.asarray(centers, dtype=float)):
            rel = center - origin
            b = rays @ rel
            c = float(rel @ rel) - radius**2
            disc = b**2 - aa * c
            hit = disc >= 0
            root = np.sqrt(np.where(hit, disc, 0.0))
            near = (b - root) / aa
            far = (b + root) / aa
            hit &= far >= 0
            entry = np.where(hit, np.minimum(entry, np.maximum(near, 0.0)), entry)
        return entry.reshape(camera.height, camera.width)

    @staticmethod
    def depth_image_to_points(camera: DepthCamera3D, depth: np.ndarray) -> np.ndarray:
        """
        Back-project valid pixels to world-frame points.

        Raises:
            ArgumentError: Image shape does not match the camera resolution
        """
        depth = np.asarray(depth, dtype=float)
        if depth.shape != (camera.height, camera.width):
            raise ArgumentError(
                f"Depth image shape {depth.shape} does not match camera {(camera.height, camera.width)}"
            )
        valid = SensingService.valid_pixels(camera, depth)
        rays = SensingService.world_rays(camera)[valid]
        return np.asarray(camera.position, dtype=float) + rays * depth[valid][:, None]

    @staticmethod
    def project_to_pixels(camera: DepthCamera3D, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pixel (row, col) and z-depth of world points; rows/cols are -1 outside the image."""
        local = (points - np.asarray(camera.position, dtype=float)) @ camera.rotation
        z = local[:, 0]
        fx, fy = camera.focal
        with np.errstate(divide="ignore", invalid="ignore"):
            col = np.floor(-fx * local[:, 1] / z + camera.width / 2.0)
            row = np.floor(-fy * local[:, 2] / z + camera.height / 2.0)
        inside = (z > 0) & (col >= 0) & (col < camera.width) & (row >= 0) & (row < camera.height)
        col = np.where(inside, col, -1).astype(np.int64)
        row = np.where(inside, row, -1).astype(np.int64)
        return row, col, z

    @staticmethod
    def fuse_free_space_3d(
        observations: list[tuple[DepthCamera3D, np.ndarray]],
        template: RegionGrid,
        robot_centers: np.ndarray | None = None,
        robot_radius: float = 0.0,
    ) -> RegionGrid:
        """
        3D unoccupied area: union of carved camera frusta minus robot spheres.

        Each pixel carves up to its carve limit, cut at the ray's entry into
        any robot sphere so the space behind a robot stays unknown. Cells
        inside robot spheres are marked occupied.

        Raises:
            ArgumentError: No observations, or an image does not match its camera
        """
        if not observations:
            raise ArgumentError("Fusion needs at least one camera")
        centers = template.all_cell_centers().reshape(-1, 3)
        free = np.zeros(len(centers), dtype=bool)
        robots = None
        if robot_centers is not None and robot_radius > 0:
            robots = np.asarray(robot_centers, dtype=float).reshape(-1, 3)
        half = 0.5 * template.cell_size
        for camera, depth in observations:
            depth = np.asarray(depth, dtype=float)
            if depth.shape != (camera.height, camera.width):
                raise ArgumentError("Depth image does not match camera resolution")
            carve = SensingService.carve_limits(camera, depth)
            if robots is not None and len(robots):
                entry = SensingService.sphere_entry_depth(camera, robots, robot_radius)
                blocked = int(np.count_nonzero(entry < carve))
                if blocked:
                    logger.debug(f"{blocked} pixel(s) of the camera at {camera.position} stop at a robot sphere")
                carve = np.minimum(carve, entry)
            row, col, z = SensingService.project_to_pixels(camera, centers)
            seen = row >= 0
            limit = np.zeros(len(centers))
            limit[seen] = carve[row[seen], col[seen]]
            free |= seen & (z >= camera.min_range) & (z < limit - half)
        labels = np.where(free.reshape(template.shape), CELL_FREE, CELL_UNKNOWN).astype(np.int8)
        if robots is not None and len(robots):
            labels[SensingService.sphere_mask(template, robots, robot_radius)] = CELL_OCCUPIED
        fused = template.with_labels(labels)
        fused.meta["source"] = "fusion3d"
        logger.debug(f"Fused {len(observations)} depth image(s): free volume {fused.free_volume():.2f} m^3")
        return fused

    # ------------------------------------------------------------------
    # Vertical scans (3D map building)
    # ------------------------------------------------------------------

    @staticmethod
    def vertical_scan(
        truth: RegionGrid,
        pose: tuple[float, float, float],
        height: float,
        max_range: float,
        resolution: float,
        noise_sigma: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Scan:
        """Half-plane scan orthogonal to the heading; angle 0 points left, pi/2 up, pi right."""
        x, y, theta = pose
        count = max(int(math.floor(math.pi / resolution + 1e-9)) + 1, 2)
        angles = np.linspace(0.0, math.pi, count)
        directions = SensingService._vertical_directions(theta, angles)
        ranges, flags = SensingService.cast_rays(truth, np.array([x, y, height]), directions, max_range)
        ranges = SensingService.add_range_noise(ranges, flags, noise_sigma, max_range, rng)
        return Scan(angles, ranges, flags)

    @staticmethod
    def _vertical_directions(theta: float, angles: np.ndarray) -> np.ndarray:
        lateral = np.array([-math.sin(theta), math.cos(theta), 0.0])
        up = np.array([0.0, 0.0, 1.0])
        return np.cos(angles)[:, None] * lateral + np.sin(angles)[:, None] * up

    @staticmethod
    def voxel_update_vertical_scan(
        voxmap: RegionGrid, pose: tuple[float, float, float], height: float, scan: Scan
    ) -> RegionGrid:
        """Update a voxel map in place from a vertical scan taken at ``pose`` and sensor ``height``."""
        x, y, theta = pose
        origin = np.array([x, y, height])
        directions = SensingService._vertical_directions(theta, scan.angles)
        endpoints = origin + scan.ranges[:, None] * directions
        return SensingService.apply_rays(voxmap, origin, endpoints, ~scan.max_range)


# Global service instance
sensing_service = SensingService()
