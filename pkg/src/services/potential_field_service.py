"""Potential-field path adjustment: vector fields, relaxation, prolongation and homotopy search."""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol

import numpy as np
from scipy import ndimage

from src.config import config
from src.models.geometry import Circle2, Obstacle2, RegionGrid
from src.models.planning import (
    BranchEvent,
    FieldGains,
    PathPolyline,
    PredictedWorld,
    ProlongMode,
    ProlongResult,
    ProlongStage,
    RelaxResult,
    SearchResult,
)
from src.models.sensing import ShrinkParams
from src.models.vehicle import InitialTorus
from src.services.geometry_service import geometry_service
from src.shared.exceptions import ArgumentError, NoPathError

logger = logging.getLogger(__name__)

# Relative size (in units of F_th) above which a field counts as dominant
DOMINANT_FIELD_RATIO = 10.0


class FieldSample(NamedTuple):
    """Clearance of each path point against its threshold.

    ``margin`` is clearance minus threshold; ``toward`` is a unit vector into
    the nearest constraint.
    """

    margin: np.ndarray
    toward: np.ndarray
    inside: np.ndarray
    distance: np.ndarray


class ClearanceField(Protocol):
    def sample(self, points: np.ndarray, steps: np.ndarray) -> FieldSample: ...


@dataclass(eq=False)
class GridField:
    """Clearance against a region grid, threshold d_s or the time-window shrink threshold."""

    grid: RegionGrid
    safety_margin: float
    shrink: ShrinkParams | None = None

    def thresholds(self, steps: np.ndarray) -> np.ndarray:
        if self.shrink is not None:
            return self.shrink.thresholds(steps)
        return np.full(len(steps), self.safety_margin)

    def sample(self, points: np.ndarray, steps: np.ndarray) -> FieldSample:
        q = self.grid.query(points)
        return FieldSample(q.distance - self.thresholds(steps), q.toward, q.inside, q.distance)


@dataclass(eq=False)
class PredictedField:
    """Clearance against predicted obstacle positions, planned robot paths and the walls."""

    world: PredictedWorld
    safety_margin: float

    def source(self, index: int, points: np.ndarray, steps: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distance, unit toward and inside flag for one obstacle (or robot path) at each step."""
        m = len(self.world.obstacles)
        if index < m:
            obstacle: Obstacle2 = self.world.obstacles[index]
            shift = PotentialFieldService.predicted_offsets(self.world, index, steps)
            return geometry_service.obstacle_distance(obstacle, points - shift)
        path = self.world.robot_paths[index - m]
        centers = path[np.minimum(np.asarray(steps), len(path) - 1)]
        rel = centers - points
        r = np.linalg.norm(rel, axis=1)
        toward = np.where(r[:, None] > 1e-12, rel / np.maximum(r, 1e-12)[:, None], np.array([1.0, 0.0]))
        return r, toward, np.zeros(len(points), dtype=bool)

    def nearest_source(self, points: np.ndarray, steps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Index and distance of the nearest obstacle or robot (walls excluded)."""
        best = np.full(len(points), math.inf)
        index = np.full(len(points), -1)
        for i in range(self.world.source_count):
            dist, _, _ = self.source(i, points, steps)
            closer = dist < best
            best[closer] = dist[closer]
            index[closer] = i
        return index, best

    def sample(self, points: np.ndarray, steps: np.ndarray) -> FieldSample:
        dist, toward, inside = geometry_service.bounds_distance(self.world.bounds, points)
        for i in range(self.world.source_count):
            d_i, t_i, in_i = self.source(i, points, steps)
            closer = d_i < dist
            dist = np.where(closer, d_i, dist)
            toward = np.where(closer[:, None], t_i, toward)
            inside = np.where(closer, in_i, inside)
        return FieldSample(dist - self.safety_margin, toward, inside, dist)


@dataclass(eq=False)
class RelaxContext:
    """Everything the fields need besides the path itself."""

    field: ClearanceField
    spacing: float
    target: np.ndarray | None = None
    mode: ProlongMode = field(default_factory=ProlongMode)
    tracked: PredictedField | None = None
    safety_margin: float = 0.0
    circle: Circle2 | None = None
    circle_fallback: np.ndarray | None = None
    torus: InitialTorus | None = None
    add_remove: bool = False
    step_offset: int = 0
    iteration_cap: int | None = None


class VelocityEstimate(NamedTuple):
    velocity: np.ndarray
    reliable: bool


class _ForceParts(NamedTuple):
    interval: np.ndarray
    repulsion: np.ndarray
    pull: np.ndarray
    circle: np.ndarray

    def total(self) -> np.ndarray:
        return self.interval + self.repulsion + self.pull + self.circle


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 1e-12 else np.zeros_like(v)


class PotentialFieldService:
    """Service for potential-field path planning."""

    # ------------------------------------------------------------------
    # Obstacle motion
    # ------------------------------------------------------------------

    @staticmethod
    def estimate_obstacle_velocity(first: RegionGrid, second: RegionGrid, delta: float) -> VelocityEstimate:
        """
        Velocity of an obstacle observed twice, one sampling interval apart.

        The obstacle is the non-free set of each grid. The estimate is the
        centroid displacement over delta; it is marked unreliable when the
        second shape is not a translate of the first (shape residual larger
        than the first shape's boundary).

        Raises:
            ArgumentError: delta is not positive or grids differ in geometry
        """
        if not delta > 0:
            raise ArgumentError(f"Sampling interval must be positive, got {delta}")
        if first.shape != second.shape or first.cell_size != second.cell_size:
            raise ArgumentError("Obstacle observations must share grid geometry")
        a = ~first.free_mask
        b = ~second.free_mask
        zero = np.zeros(first.ndim)
        if not (a.any() and b.any()):
            logger.warning("Obstacle not visible in one of the observations, velocity unreliable")
            return VelocityEstimate(zero, False)

        ca = np.argwhere(a).mean(axis=0)
        cb = np.argwhere(b).mean(axis=0)
        shift_cells = cb - ca
        velocity = shift_cells * first.cell_size / delta

        back = ndimage.shift(b.astype(np.uint8), -np.round(shift_cells), order=0, mode="constant") > 0
        residual = int(np.count_nonzero(a ^ back))
        boundary = int(np.count_nonzero(a & ~ndimage.binary_erosion(a)))
        reliable = residual <= max(boundary, 1)
        if not reliable:
            logger.warning(
                f"Obstacle shape changed between observations (residual {residual} cells > {boundary}), "
                "velocity estimate unreliable"
            )
        return VelocityEstimate(velocity, reliable)

    @staticmethod
    def predicted_offsets(world: PredictedWorld, index: int, steps: np.ndarray) -> np.ndarray:
        """Displacement of obstacle ``index`` at each step: velocity * k * delta, one row per step."""
        steps = np.asarray(steps, dtype=float).reshape(-1)
        return world.velocities[index] * (steps * world.delta)[:, None]

    @staticmethod
    def predict_obstacle(world: PredictedWorld, index: int, k: int) -> Obstacle2:
        """Obstacle ``index`` translated to its predicted position at step ``k``."""
        if k < 0:
            raise ArgumentError(f"Step index must be non-negative, got {k}")
        obstacle = world.obstacles[index]
        offset = PotentialFieldService.predicted_offsets(world, index, np.array([k]))[0]
        if not np.any(offset):
            return obstacle
        return obstacle.translated(offset)

    # ------------------------------------------------------------------
    # Vector fields
    # ------------------------------------------------------------------

    @staticmethod
    def interval_forces(points: np.ndarray, spacing: float, gain: float) -> np.ndarray:
        """F_I for every point: G_I(b(k) l_k - b(k+1) l_{k+1}) with l_k = p_{k-1} - p_k and b(k) = 1 - L/|l_k|."""
        back = points[:-1] - points[1:]
        lengths = np.linalg.norm(back, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(lengths > 1e-12, 1.0 - spacing / lengths, 0.0)
        term = b[:, None] * back
        forces = np.zeros_like(points)
        forces[1:] += term
        forces[1:-1] -= term[1:]
        return gain * forces

    @staticmethod
    def field_interval(path: PathPolyline, k: int, gains: FieldGains) -> np.ndarray:
        """Interval field on point k (1 <= k <= n)."""
        n = len(path) - 1
        if not 1 <= k <= n:
            raise ArgumentError(f"Interval field defined for 1 <= k <= {n}, got {k}")
        pts = path.points
        lo, hi = k - 1, min(k + 2, n + 1)
        if np.any(np.linalg.norm(np.diff(pts[lo:hi], axis=0), axis=1) <= 1e-12):
            logger.debug(f"Coincident successive points around index {k}, interval field degenerate")
        return PotentialFieldService.interval_forces(pts, path.spacing, gains.interval)[k]

    @staticmethod
    def repulsion_forces(sample: FieldSample, gains: FieldGains) -> np.ndarray:
        """G_R (clearance - threshold) toward the obstacle, where clearance is below threshold."""
        coef = gains.repulsion * np.minimum(sample.margin, 0.0)
        return coef[:, None] * sample.toward

    @staticmethod
    def field_repulsion(
        path: PathPolyline, k: int, region: ClearanceField, gains: FieldGains, step_offset: int = 0
    ) -> np.ndarray:
        """Repulsion field on point k against a clearance field evaluated at step k."""
        sample = region.sample(path.points[k : k + 1], np.array([step_offset + k]))
        if bool(sample.inside[0]):
            logger.debug(f"Point {k} lies inside an obstacle")
        return PotentialFieldService.repulsion_forces(sample, gains)[0]

    @staticmethod
    def field_pull(
        path: PathPolyline,
        target: np.ndarray,
        mode: ProlongMode,
        gains: FieldGains,
        tracked: tuple[float, np.ndarray] | None = None,
        safety_margin: float = 0.0,
    ) -> np.ndarray:
        """
        Pull field on the last point.

        R1 pulls toward the target with magnitude G_P (tapering linearly inside
        one spacing of it). R2 holds the point at d_s from the tracked obstacle
        and moves it around: G_R(h - d_s) e + gamma G_P b, with b the unit
        vector e rotated by +90 degrees.

        Args:
            path: Current path
            target: Target point
            mode: Prolongation mode
            gains: Field gains
            tracked: (h, e) distance and unit vector toward the tracked obstacle, required in R2
            safety_margin: d_s
        """
        last = path.end
        if mode.stage is ProlongStage.R1:
            rel = np.asarray(target, dtype=float) - last
            dist = float(np.linalg.norm(rel))
            return gains.pull * rel / max(dist, path.spacing)
        if tracked is None:
            raise ArgumentError("R2 pull needs the tracked obstacle distance and direction")
        h, e_hat = tracked
        return gains.repulsion * (h - safety_margin) * e_hat + mode.gamma * gains.pull * _rot90(e_hat)

    @staticmethod
    def select_initial_circle(
        heading: np.ndarray, start: np.ndarray, first: np.ndarray, circles: tuple[Circle2, Circle2]
    ) -> Circle2:
        """Circle on the side of the heading where p_1 lies (left circle first)."""
        rel = first - start
        cross = heading[0] * rel[1] - heading[1] * rel[0]
        return circles[0] if cross >= 0 else circles[1]

    @staticmethod
    def circle_forces(points: np.ndarray, circle: Circle2, fallback: np.ndarray, gains: FieldGains) -> np.ndarray:
        """F_C: inside the circle, G_C(1 - R/|h|) h with h from the point to the centre."""
        h = np.asarray(circle.center, dtype=float) - points
        r = np.linalg.norm(h, axis=1)
        forces = np.zeros_like(points)
        inside = r < circle.radius
        regular = inside & (r > 1e-12)
        forces[regular] = gains.circle * (1.0 - circle.radius / r[regular])[:, None] * h[regular]
        centred = inside & ~regular
        if np.any(centred):
            logger.debug("Path point at initial circle centre, pushing along fallback direction")
            forces[centred] = gains.circle * circle.radius * _unit(np.asarray(fallback, dtype=float))
        forces[0] = 0.0
        return forces

    @staticmethod
    def field_initial_circle(
        point: np.ndarray, circle: Circle2, gains: FieldGains, fallback: np.ndarray
    ) -> np.ndarray:
        """Initial-circle field on a single point."""
        pts = np.vstack([np.zeros(2), np.asarray(point, dtype=float)])
        return PotentialFieldService.circle_forces(pts, circle, fallback, gains)[1]

    @staticmethod
    def torus_forces(points: np.ndarray, torus: InitialTorus, gains: FieldGains) -> np.ndarray:
        """F_C in 3D: push points out of the torus tube around the base circle."""
        base = torus.nearest_on_base(points)
        h = base - points
        r = np.linalg.norm(h, axis=1)
        forces = np.zeros_like(points)
        inside = (r < torus.tube_radius) & (r > 1e-12)
        forces[inside] = gains.circle * (1.0 - torus.tube_radius / r[inside])[:, None] * h[inside]
        forces[0] = 0.0
        return forces

    @staticmethod
    def _forces(points: np.ndarray, ctx: RelaxContext, gains: FieldGains) -> _ForceParts:
        steps = ctx.step_offset + np.arange(len(points))
        interval = PotentialFieldService.interval_forces(points, ctx.spacing, gains.interval)
        sample = ctx.field.sample(points, steps)
        repulsion = PotentialFieldService.repulsion_forces(sample, gains)
        repulsion[0] = 0.0

        pull = np.zeros_like(points)
        if ctx.target is not None and len(points) > 1:
            tracked = None
            if ctx.mode.stage is ProlongStage.R2 and ctx.tracked is not None and ctx.mode.obstacle is not None:
                h, e_hat, _ = ctx.tracked.source(ctx.mode.obstacle, points[-1:], steps[-1:])
                tracked = (float(h[0]), e_hat[0])
            path = PathPolyline(points, ctx.spacing)
            pull[-1] = PotentialFieldService.field_pull(
                path, ctx.target, ctx.mode, gains, tracked, ctx.safety_margin
            )

        circle = np.zeros_like(points)
        if ctx.circle is not None:
            fallback = ctx.circle_fallback if ctx.circle_fallback is not None else np.array([0.0, 1.0])
            circle = PotentialFieldService.circle_forces(points, ctx.circle, fallback, gains)
        elif ctx.torus is not None:
            circle = PotentialFieldService.torus_forces(points, ctx.torus, gains)
        return _ForceParts(interval, repulsion, pull, circle)

    # ------------------------------------------------------------------
    # Relaxation
    # ------------------------------------------------------------------

    @staticmethod
    def relax_path(path: PathPolyline, ctx: RelaxContext, gains: FieldGains) -> RelaxResult:
        """
        Adjust a path by momentum iteration until every field is below threshold.

        Each sweep updates v <- G_N v + F with F taken at the current points,
        then moves p <- p + v; p_0 never moves. With ``add_remove`` the last
        point is removed when the one before it is within L_under of the
        target, and a point is appended when the last one is farther than
        L_over from the target.

        Args:
            path: Path to adjust
            ctx: Fields and options
            gains: Field gains

        Returns:
            RelaxResult; ``converged`` is False when the sweep cap was hit, and
            ``abandoned_reason`` names opposing dominant fields if detected
        """
        cap = ctx.iteration_cap or config.relax_iteration_cap
        points = path.points.copy()
        velocity = np.zeros_like(points)
        spacing = ctx.spacing
        fmax = math.inf
        for iteration in range(1, cap + 1):
            forces = PotentialFieldService._forces(points, ctx, gains).total()
            forces[0] = 0.0
            fmax = float(np.linalg.norm(forces, axis=1).max()) if len(points) > 1 else 0.0
            if fmax < gains.threshold:
                return RelaxResult(PathPolyline(points, spacing), True, iteration, fmax)
            velocity = gains.attenuation * velocity + forces
            velocity[0] = 0.0
            points[1:] += velocity[1:]
            if ctx.add_remove and ctx.target is not None:
                points, velocity = PotentialFieldService._add_remove(points, velocity, ctx.target, spacing, gains)

        parts = PotentialFieldService._forces(points, ctx, gains)
        reason = PotentialFieldService._opposing_fields(parts, gains)
        if reason:
            logger.info(f"Path adjustment abandoned after {cap} sweeps: {reason}")
        else:
            logger.warning(f"Path adjustment did not converge in {cap} sweeps (max field {fmax:.2e})")
        return RelaxResult(PathPolyline(points, spacing), False, cap, fmax, reason)

    @staticmethod
    def _add_remove(
        points: np.ndarray, velocity: np.ndarray, target: np.ndarray, spacing: float, gains: FieldGains
    ) -> tuple[np.ndarray, np.ndarray]:
        if len(points) > 2 and np.linalg.norm(points[-2] - target) < gains.under:
            return points[:-1], velocity[:-1]
        gap = target - points[-1]
        dist = float(np.linalg.norm(gap))
        if dist > gains.over:
            new = points[-1] + spacing * gap / dist
            return np.vstack([points, new]), np.vstack([velocity, np.zeros(points.shape[1])])
        return points, velocity

    @staticmethod
    def _opposing_fields(parts: _ForceParts, gains: FieldGains) -> str | None:
        """Name the clash keeping a path from converging, if any."""
        total = parts.total()
        j = int(np.argmax(np.linalg.norm(total, axis=1)))
        big = DOMINANT_FIELD_RATIO * gains.threshold
        fc, fr = parts.circle[j], parts.repulsion[j]
        if np.linalg.norm(fc) > big and np.linalg.norm(fr) > big and float(fc @ fr) < 0:
            return f"initial-circle field opposes repulsion at point {j}"
        for i in (j - 1, j + 1):
            if 0 < i < len(total):
                other = parts.repulsion[i]
                if np.linalg.norm(fr) > big and np.linalg.norm(other) > big and float(fr @ other) < 0:
                    return f"repulsion from opposite sides around point {j}"
        return None

    # ------------------------------------------------------------------
    # Prolongation and homotopy search
    # ------------------------------------------------------------------

    @staticmethod
    def _choose_gamma(
        field_: PredictedField, last: np.ndarray, e_hat: np.ndarray, spacing: float, step: int
    ) -> int:
        side = _rot90(e_hat)
        probes = np.vstack([last + spacing * side, last - spacing * side])
        clearance = field_.sample(probes, np.array([step, step])).distance
        return 1 if clearance[0] >= clearance[1] else -1

    @staticmethod
    def _line_clear_of(
        field_: PredictedField, index: int, start: np.ndarray, target: np.ndarray, step: int, spacing: float
    ) -> bool:
        length = float(np.linalg.norm(target - start))
        count = max(int(math.ceil(2.0 * length / spacing)), 1) + 1
        t = np.linspace(0.0, 1.0, count)
        points = start + t[:, None] * (target - start)
        steps = step + np.floor(t * length / spacing).astype(int)
        dist, _, _ = field_.source(index, points, steps)
        return bool(np.all(dist >= field_.safety_margin))

    @staticmethod
    def prolong_path(
        start: np.ndarray,
        target: np.ndarray,
        world: PredictedWorld,
        gains: FieldGains,
        spacing: float,
        safety_margin: float,
        branch: BranchEvent | None = None,
    ) -> ProlongResult:
        """
        Grow a path point by point toward the target, relaxing after each point.

        In R1 the next point heads straight for the target; when it would come
        within d_s of an obstacle the mode switches to R2 around that obstacle
        (direction gamma toward the side with more clearance) and the switch is
        recorded as a branch event carrying the opposite direction. R2 returns
        to R1 once the segment to the target stays clear of the tracked
        obstacle's d_s-enlargement.

        Args:
            start: Start point p_0
            target: Target point
            world: Predicted obstacles and already planned robots
            gains: Field gains
            spacing: L
            safety_margin: d_s
            branch: Continue from a branch snapshot instead of from ``start``

        Returns:
            ProlongResult with ``reached`` False when the point cap was hit or
            a step adjustment did not converge
        """
        target = np.asarray(target, dtype=float)
        field_ = PredictedField(world, safety_margin)
        if branch is not None:
            points, mode, branches = branch.points.copy(), branch.mode, branch.depth
        else:
            points, mode, branches = np.atleast_2d(np.asarray(start, dtype=float)), ProlongMode(), 0
        events: list[BranchEvent] = []
        failures = 0
        cap = config.plan_point_cap

        while True:
            last = points[-1]
            n = len(points) - 1
            if np.linalg.norm(target - last) < spacing:
                logger.debug(f"Prolongation reached target with {len(points)} points, {branches} branch(es)")
                return ProlongResult(PathPolyline(points, spacing), True, events, branches, failures)
            if n >= cap:
                logger.warning(f"Prolongation hit the point cap ({cap})")
                return ProlongResult(PathPolyline(points, spacing), False, events, branches, failures)

            if mode.stage is ProlongStage.R2 and mode.obstacle is not None:
                if PotentialFieldService._line_clear_of(field_, mode.obstacle, last, target, n, spacing):
                    logger.debug(f"R2 -> R1 at point {n}")
                    mode = ProlongMode()

            if mode.stage is ProlongStage.R1:
                candidate = last + spacing * _unit(target - last)
                index, dist = field_.nearest_source(candidate[None, :], np.array([n + 1]))
                if index[0] >= 0 and dist[0] < safety_margin:
                    phi = int(index[0])
                    _, e_hat, _ = field_.source(phi, last[None, :], np.array([n + 1]))
                    gamma = PotentialFieldService._choose_gamma(field_, last, e_hat[0], spacing, n + 1)
                    branches += 1
                    events.append(BranchEvent(points.copy(), ProlongMode(ProlongStage.R2, -gamma, phi), branches))
                    mode = ProlongMode(ProlongStage.R2, gamma, phi)
                    logger.debug(f"R1 -> R2 at point {n} around source {phi}, gamma={gamma}")

            if mode.stage is ProlongStage.R2 and mode.obstacle is not None:
                _, e_hat, _ = field_.source(mode.obstacle, last[None, :], np.array([n + 1]))
                candidate = last + spacing * mode.gamma * _rot90(e_hat[0])

            points = np.vstack([points, candidate])
            ctx = RelaxContext(
                field=field_,
                spacing=spacing,
                target=target,
                mode=mode,
                tracked=field_,
                safety_margin=safety_margin,
            )
            result = PotentialFieldService.relax_path(PathPolyline(points, spacing), ctx, gains)
            if not result.converged:
                failures += 1
                logger.info(
                    f"Prolongation dropped at point {n + 1}: {result.abandoned_reason or 'adjustment did not converge'}"
                )
                return ProlongResult(PathPolyline(points, spacing), False, events, branches, failures)
            points = result.path.points

    @staticmethod
    def homotopy_search(
        start: np.ndarray,
        target: np.ndarray,
        world: PredictedWorld,
        gains: FieldGains,
        spacing: float,
        safety_margin: float,
    ) -> SearchResult:
        """
        Explore both directions at every obstacle encounter and keep the shortest path.

        Candidates are processed first in, first out; every R1 -> R2 event
        queues a copy continuing in the other direction. Completed candidates
        are tightened with point add/remove before comparison and dropped when
        that adjustment does not converge. Shortest means
        fewest points, then fewest branch events, then discovery order.

        Raises:
            NoPathError: No candidate reached the target with a converged path
        """
        cap = config.candidate_worklist_cap
        queue: deque[BranchEvent | None] = deque([None])
        spawned = 1
        truncated = False
        finished: list[tuple[int, int, int, PathPolyline]] = []
        failed = 0
        target = np.asarray(target, dtype=float)
        field_ = PredictedField(world, safety_margin)

        order = -1
        while queue:
            snapshot = queue.popleft()
            order += 1
            result = PotentialFieldService.prolong_path(
                start, target, world, gains, spacing, safety_margin, branch=snapshot
            )
            for event in result.events:
                if spawned >= cap:
                    truncated = True
                    continue
                queue.append(event)
                spawned += 1
            if not result.reached:
                failed += 1
                continue
            ctx = RelaxContext(field=field_, spacing=spacing, target=target, add_remove=True)
            tightened = PotentialFieldService.relax_path(result.path, ctx, gains)
            if not tightened.converged:
                failed += 1
                logger.info(
                    f"Candidate {order} dropped: {tightened.abandoned_reason or 'final adjustment did not converge'}"
                )
                continue
            finished.append((len(tightened.path), result.branch_count, order, tightened.path))

        if truncated:
            logger.warning(f"Candidate worklist truncated at {cap} candidates")
        if not finished:
            raise NoPathError(f"All {failed} candidate path(s) failed to reach the target or converge")
        finished.sort(key=lambda item: (item[0], item[1], item[2]))
        best = finished[0][3]
        logger.info(
            f"Homotopy search: {len(finished)} completed, {failed} failed; selected {len(best)} points"
        )
        ordered = sorted(finished, key=lambda item: item[2])
        return SearchResult(
            best,
            [item[3] for item in ordered],
            [item[1] for item in ordered],
            failed,
            truncated,
        )


# Global service instance
potential_field_service = PotentialFieldService()
