"""Probabilistic roadmap planning and 3D path relaxation for flying robots."""

import logging
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from src.models.geometry import RegionGrid
from src.models.planning import FieldGains, Path3, PathPolyline, Prm3Graph, Prm3Params, RelaxResult
from src.models.sensing import ShrinkParams
from src.models.vehicle import InitialTorus, Vehicle3State
from src.services.geometry_service import geometry_service
from src.services.potential_field_service import (
    FieldSample,
    RelaxContext,
    potential_field_service,
)
from src.services.sensing_service import sensing_service
from src.shared.constants import CELL_OCCUPIED
from src.shared.exceptions import ArgumentError, EmptyRegionError, NoPathError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class ValidAreaField:
    """Clearance against the valid area at each step, threshold d_s."""

    area: RegionGrid
    shrink: ShrinkParams
    other_paths: tuple[np.ndarray, ...] = ()
    _areas: dict[int, RegionGrid] = field(default_factory=dict, init=False, repr=False)

    def at_step(self, k: int) -> RegionGrid:
        # valid_area stops changing once k passes the window and every other path's end
        last = max([self.shrink.horizon, *(len(p) - 1 for p in self.other_paths)])
        key = min(max(k, 0), last)
        if key not in self._areas:
            self._areas[key] = RoadmapService.valid_area(self.area, key, self.shrink, self.other_paths)
        return self._areas[key]

    def sample(self, points: np.ndarray, steps: np.ndarray) -> FieldSample:
        distance = np.zeros(len(points))
        toward = np.zeros_like(points)
        inside = np.zeros(len(points), dtype=bool)
        steps = np.asarray(steps)
        for k in np.unique(steps):
            rows = steps == k
            q = self.at_step(int(k)).query(points[rows])
            distance[rows] = q.distance
            toward[rows] = q.toward
            inside[rows] = q.inside
        return FieldSample(distance - self.shrink.safety_margin, toward, inside, distance)


class RoadmapService:
    """Service for PRM rough paths, valid areas and 3D path adjustment."""

    @staticmethod
    def sample_free(region: RegionGrid, count: int, rng: np.random.Generator) -> np.ndarray:
        """
        Draw points uniformly from the free set of a region.

        A free cell is chosen uniformly, then the point is jittered uniformly
        inside that cell.

        Raises:
            ArgumentError: count is negative
            EmptyRegionError: region has no free cells
        """
        if count < 0:
            raise ArgumentError(f"Sample count must be non-negative, got {count}")
        free = np.argwhere(region.free_mask)
        if len(free) == 0:
            raise EmptyRegionError("Cannot sample from an empty free set")
        cells = free[rng.integers(0, len(free), size=count)]
        return region.origin + (cells + rng.random((count, region.ndim))) * region.cell_size

    @staticmethod
    def heading_bound(params: Prm3Params) -> float:
        """Largest angle between the heading and an edge leaving the robot's position."""
        return math.asin(min(1.0, params.spacing * params.u_max / (2.0 * params.speed)))

    @staticmethod
    def connect_prm(
        samples: np.ndarray,
        params: Prm3Params,
        region: RegionGrid,
        state: Vehicle3State,
        goal: np.ndarray,
        endpoint_tolerance: float = 0.0,
    ) -> Prm3Graph:
        """
        Build the roadmap over the robot position, the goal and the samples.

        Vertex 0 is the robot position and vertex 1 the goal. Each vertex is
        joined to its N_c nearest vertices when the segment is clear; edges at
        the robot position must also leave within the heading bound.

        Args:
            samples: Free sample points
            params: Roadmap parameters
            region: Sampling region used for edge checks
            state: Robot position and heading
            goal: Goal point
            endpoint_tolerance: Accept edge samples this close to free space on
                edges touching the robot position or the goal
        """
        vertices = np.vstack([state.s, np.asarray(goal, dtype=float), np.atleast_2d(samples)])
        graph = nx.Graph()
        graph.add_nodes_from(range(len(vertices)))
        k = min(params.neighbors + 1, len(vertices))
        _, neighbors = cKDTree(vertices).query(vertices, k=k)
        bound = RoadmapService.heading_bound(params)

        rejected_heading = 0
        for i, row in enumerate(np.atleast_2d(neighbors)):
            for j in (int(n) for n in row):
                if j == i or j >= len(vertices) or graph.has_edge(i, j):
                    continue
                if 0 in (i, j):
                    other = vertices[j if i == 0 else i]
                    direction = other - vertices[0]
                    norm = float(np.linalg.norm(direction))
                    if norm < 1e-12:
                        continue
                    angle = math.acos(max(-1.0, min(1.0, float(direction @ state.i) / norm)))
                    if angle > bound:
                        rejected_heading += 1
                        continue
                tolerance = endpoint_tolerance if (i < 2 or j < 2) else 0.0
                if not geometry_service.segment_clear(region, vertices[i], vertices[j], tolerance):
                    continue
                graph.add_edge(i, j, weight=float(np.linalg.norm(vertices[i] - vertices[j])))

        for key, name in ((0, "start"), (1, "goal")):
            if graph.degree(key) == 0:
                logger.warning(f"Roadmap {name} vertex is isolated")
        logger.debug(
            f"Roadmap: {graph.number_of_nodes()} vertices, {graph.number_of_edges()} edges, "
            f"{rejected_heading} start edge(s) rejected by heading bound {math.degrees(bound):.1f} deg"
        )
        return Prm3Graph(vertices, graph, 0, 1)

    @staticmethod
    def shortest_prm_path(roadmap: Prm3Graph) -> list[int]:
        """
        Minimal-length vertex sequence from the start to the goal.

        Raises:
            NoPathError: start and goal are not connected
        """
        if roadmap.init == roadmap.goal:
            return [roadmap.init]
        try:
            return list(nx.dijkstra_path(roadmap.graph, roadmap.init, roadmap.goal, weight="weight"))
        except (nx.NetworkXNoPath, nx.NodeNotFound) as e:
            raise NoPathError("Roadmap does not connect start and goal") from e

    @staticmethod
    def resample_equal(points: np.ndarray, spacing: float) -> Path3:
        """Arc-length resampling at multiples of L; a path shorter than L keeps its two endpoints."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not spacing > 0:
            raise ArgumentError(f"Spacing must be positive, got {spacing}")
        out = geometry_service.resample_polyline(points, spacing)
        if len(out) == 1 and len(points) > 1 and np.linalg.norm(points[-1] - points[0]) > 0:
            out = np.vstack([points[0], points[-1]])
        return PathPolyline(out, spacing)

    @staticmethod
    def valid_area(
        area: RegionGrid,
        k: int,
        shrink: ShrinkParams,
        other_paths: tuple[np.ndarray, ...] = (),
    ) -> RegionGrid:
        """Time-shrunk area at step k minus the R_r-spheres of other robots' planned points."""
        shrunk = sensing_service.shrink_for_time(area, k, shrink)
        if not other_paths:
            return shrunk
        centers = np.array([path[min(k, len(path) - 1)] for path in other_paths])
        mask = sensing_service.sphere_mask(shrunk, centers, shrink.robot_radius)
        labels = shrunk.labels.copy()
        labels[mask] = CELL_OCCUPIED
        return shrunk.with_labels(labels)

    @staticmethod
    def rough_path(
        area: RegionGrid,
        state: Vehicle3State,
        goal: np.ndarray,
        params: Prm3Params,
        shrink: ShrinkParams,
        rng: np.random.Generator,
    ) -> Path3:
        """Sample, connect, search and resample a rough path inside R[A, d_s + T delta V_max]."""
        region = geometry_service.reduce(area, shrink.threshold(shrink.horizon))
        samples = RoadmapService.sample_free(region, params.samples, rng)
        roadmap = RoadmapService.connect_prm(
            samples, params, region, state, goal, endpoint_tolerance=shrink.threshold(shrink.horizon)
        )
        order = RoadmapService.shortest_prm_path(roadmap)
        return RoadmapService.resample_equal(roadmap.vertices[order], params.spacing)

    @staticmethod
    def relax3(
        path: Path3,
        area: RegionGrid,
        shrink: ShrinkParams,
        torus: InitialTorus,
        gains: FieldGains,
        target: np.ndarray,
        other_paths: tuple[np.ndarray, ...] = (),
    ) -> RelaxResult:
        """
        Adjust a 3D path against the valid area at every step.

        Point k keeps d_s from ``valid_area`` at step k, i.e. the area shrunk
        by min(k, T) delta V_max minus the R_r-spheres of other robots; the
        last point is pulled to the target and points are pushed out of the
        initial torus.
        """
        ctx = RelaxContext(
            field=ValidAreaField(area, shrink, other_paths),
            spacing=path.spacing,
            target=np.asarray(target, dtype=float),
            torus=torus,
            add_remove=True,
        )
        result = potential_field_service.relax_path(path, ctx, gains)
        if not result.converged:
            logger.info(f"3D path adjustment did not converge ({result.abandoned_reason or 'iteration cap'})")
        return result


# Global service instance
roadmap_service = RoadmapService()
