"""Randomized safe exploration and map building with a planar range finder."""

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson

from src.config import config
from src.models.control import ExplorerConfig, ExplorerMode, ExplorerState, OdometryModel, TangentSegment
from src.models.geometry import RegionGrid, World2D, World3D
from src.models.metrics import ExplorationResult, Trajectory
from src.models.sensing import Scan, SensorNode2D
from src.models.vehicle import UnicycleParams, UnicycleState, wrap_angle
from src.services.geometry_service import geometry_service
from src.services.sensing_service import sensing_service
from src.services.tracking_service import tracking_service
from src.services.vehicle_service import vehicle_service
from src.shared.constants import (
    DEFAULT_SMOOTH_SLOPE_PER_SIGMA,
    ODOMETRY_QUADRATURE_PANELS,
    VERTICAL_SCAN_RESOLUTION,
)
from src.shared.exceptions import ArgumentError

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("t", "x", "y", "theta", "mode", "min_clearance")


class ControlDecision(NamedTuple):
    u: float
    state: ExplorerState
    draw: float | None = None


class OdometryReading(NamedTuple):
    """Measured speed, turn rate and lateral acceleration over one interval."""

    v: float
    u: float
    a: float


def _streams(seed: int) -> list[np.random.Generator]:
    """Independent generators for branch decisions, planar scan, odometry and vertical scan noise."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(4)]


def _own_run(scan: Scan, start: int, step: int, jump: float) -> set[int]:
    """Indices of the contiguous scan run through ``start`` walking away by ``step``."""
    n = len(scan)
    run = {start}
    i = start
    while True:
        j = (i + step) % n
        if j in run or scan.max_range[j] or abs(scan.ranges[j] - scan.ranges[i]) > jump:
            return run
        run.add(j)
        i = j


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip((points - a) @ ab / float(ab @ ab), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


class ExplorationService:
    """Service for the three-mode exploration controller and map-building runs."""

    # ------------------------------------------------------------------
    # Tangent detection
    # ------------------------------------------------------------------

    @staticmethod
    def detect_tangents_from_scan(scan: Scan, d0: float) -> list[TangentSegment]:
        """
        Tangent segments hinted by range discontinuities, in the robot frame.

        A pair of neighbouring rays whose ranges differ by more than 2 d0
        marks an obstacle edge at the shorter ray's hit point W. The segment
        runs from the robot to W offset by d0 perpendicular to the shorter ray,
        toward the longer one. Segments passing within d0 of a hit point of
        another obstacle are dropped.

        Args:
            scan: Scan with angles in the robot frame
            d0: Safety margin

        Returns:
            Surviving segments; ``side`` is +1 when the obstacle lies to the
            segment's right (segment rotated counter-clockwise from the ray)
        """
        if not d0 > 0:
            raise ArgumentError(f"Safety margin must be positive, got {d0}")
        n = len(scan)
        if n < 2:
            return []
        pairs = [(i, i + 1) for i in range(n - 1)]
        step = float(np.median(np.diff(scan.angles))) if n > 2 else abs(scan.angles[1] - scan.angles[0])
        if abs((scan.angles[-1] - scan.angles[0]) + step - 2.0 * math.pi) < 0.5 * step:
            pairs.append((n - 1, 0))

        points = scan.points()
        hits = np.flatnonzero(~scan.max_range)
        jump = 2.0 * d0
        segments: list[TangentSegment] = []
        for k, k1 in pairs:
            if abs(scan.ranges[k] - scan.ranges[k1]) <= jump:
                continue
            near, far = (k, k1) if scan.ranges[k] < scan.ranges[k1] else (k1, k)
            if scan.max_range[near]:
                continue
            # Positive side when the longer ray has the larger angle
            side = 1 if near == k else -1
            ray = points[near] / scan.ranges[near]
            offset = side * d0 * np.array([-ray[1], ray[0]])
            end = points[near] + offset
            own = _own_run(scan, near, -side, jump)
            others = [i for i in hits if i not in own]
            if others:
                gaps = _segment_distances(points[others], np.zeros(2), end)
                if np.any(gaps < d0):
                    continue
            segments.append(TangentSegment(np.zeros(2), end, side, near))
        return segments

    @staticmethod
    def coinciding_tangent(segments: list[TangentSegment], theta_trig: float) -> TangentSegment | None:
        """Segment closest to the heading, if within theta_trig of it."""
        aligned = [s for s in segments if abs(s.angle) < theta_trig]
        if not aligned:
            return None
        return min(aligned, key=lambda s: abs(s.angle))

    # ------------------------------------------------------------------
    # Control law
    # ------------------------------------------------------------------

    @staticmethod
    def initial_state(cfg: ExplorerConfig) -> ExplorerState:
        """R1 state; the initial circle is left for even seeds, right for odd."""
        return ExplorerState(ExplorerMode.R1, r1_sign=1 if cfg.seed % 2 == 0 else -1)

    @staticmethod
    def _to_world(pose: UnicycleState, local: np.ndarray) -> np.ndarray:
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        return pose.position + np.array([c * local[0] - s * local[1], s * local[0] + c * local[1]])

    @staticmethod
    def _boundary_side(scan: Scan) -> int:
        """+1 when the closest scan hit lies to the left of the heading."""
        hits = ~scan.max_range
        if not np.any(hits):
            return 1
        k = int(np.argmin(np.where(hits, scan.ranges, np.inf)))
        local = scan.points()[k]
        # Robot frame: heading is +x, so the cross product reduces to the y component
        return 1 if local[1] >= 0 else -1

    @staticmethod
    def explorer_control(
        pose: UnicycleState,
        scan: Scan,
        state: ExplorerState,
        cfg: ExplorerConfig,
        rng: np.random.Generator,
    ) -> ControlDecision:
        """
        One decision of the three-mode exploration law.

        R1 turns at full rate on the initial circle until a tangent segment
        lines up with the heading. R2 steers toward the segment's endpoint and
        hands over to boundary following within d_trig of it. R3 follows the
        boundary at d0; when a segment lines up and no pause is active, one
        uniform draw decides between leaving (probability q0) and pausing the
        check for the pause time.

        Args:
            pose: Robot pose (estimated, when odometry is imperfect)
            scan: Scan in the robot frame
            state: Current controller state
            cfg: Explorer parameters
            rng: Generator for branch decisions only
        """
        t = state.time
        d_min = scan.min_range
        d_dot = 0.0 if state.prev_d_min is None else (d_min - state.prev_d_min) / cfg.sample_time
        smooth = (cfg.smooth_slope or DEFAULT_SMOOTH_SLOPE_PER_SIGMA / cfg.sigma) if cfg.smooth else None
        common = {"r1_sign": state.r1_sign, "prev_d_min": d_min, "time": t + cfg.sample_time}

        tangent = None
        if state.mode is not ExplorerMode.R2:
            tangent = ExplorationService.coinciding_tangent(
                ExplorationService.detect_tangents_from_scan(scan, cfg.d0), cfg.theta_trig
            )

        if state.mode is ExplorerMode.R1:
            if tangent is not None:
                target = ExplorationService._to_world(pose, tangent.end)
                logger.debug(f"t={t:.2f} R1 -> R2 toward ({target[0]:.2f}, {target[1]:.2f})")
                new = ExplorerState(ExplorerMode.R2, target, state.pause_until, state.gamma, **common)
                return ControlDecision(ExplorationService._pursuit(pose, target, cfg), new)
            u = state.r1_sign * cfg.u_max
            return ControlDecision(u, ExplorerState(ExplorerMode.R1, None, state.pause_until, state.gamma, **common))

        if state.mode is ExplorerMode.R2:
            assert state.target is not None
            if float(np.linalg.norm(state.target - pose.position)) < cfg.d_trig:
                gamma = ExplorationService._boundary_side(scan)
                logger.debug(f"t={t:.2f} R2 -> R3 with boundary on the {'left' if gamma > 0 else 'right'}")
                u = tracking_service.boundary_following(d_min, d_dot, cfg.d0, gamma, cfg.gains, cfg.u_max, smooth)
                return ControlDecision(u, ExplorerState(ExplorerMode.R3, None, state.pause_until, gamma, **common))
            u = ExplorationService._pursuit(pose, state.target, cfg)
            return ControlDecision(u, ExplorerState(ExplorerMode.R2, state.target, state.pause_until, state.gamma, **common))

        draw = None
        if tangent is not None and t >= state.pause_until:
            draw = float(rng.random())
            if draw < cfg.q0:
                target = ExplorationService._to_world(pose, tangent.end)
                logger.debug(f"t={t:.2f} R3 -> R2 (draw {draw:.3f} < q0={cfg.q0})")
                new = ExplorerState(ExplorerMode.R2, target, state.pause_until, state.gamma, **common)
                return ControlDecision(ExplorationService._pursuit(pose, target, cfg), new, draw)
            pause_until = t + cfg.pause_time
        else:
            pause_until = state.pause_until
        u = tracking_service.boundary_following(d_min, d_dot, cfg.d0, state.gamma, cfg.gains, cfg.u_max, smooth)
        return ControlDecision(u, ExplorerState(ExplorerMode.R3, None, pause_until, state.gamma, **common), draw)

    @staticmethod
    def _pursuit(pose: UnicycleState, target: np.ndarray, cfg: ExplorerConfig) -> float:
        rel = target - pose.position
        bearing = wrap_angle(math.atan2(float(rel[1]), float(rel[0])) - pose.theta)
        return tracking_service.sgn(bearing) * cfg.u_max

    # ------------------------------------------------------------------
    # Odometry
    # ------------------------------------------------------------------

    @staticmethod
    def dead_reckoning_step(pose: UnicycleState, reading: OdometryReading, dt: float) -> UnicycleState:
        if not dt > 0:
            raise ArgumentError(f"Sample time must be positive, got {dt}")
        x = pose.x + reading.v * dt * math.cos(pose.theta)
        y = pose.y + reading.v * dt * math.sin(pose.theta)
        return UnicycleState(x, y, pose.theta + reading.u * dt)

    @staticmethod
    def improved_odometry_step(pose: UnicycleState, reading: OdometryReading, dt: float) -> UnicycleState:
        """
        Pose update splitting the motion into a forward and a lateral part.

        The forward displacement integrates sqrt(v^2 - (a t)^2) over the
        interval, the lateral one is a dt^2 / 2 along the left normal, and the
        heading advances by u dt. Falls back to dead reckoning when the lateral
        speed would exceed the measured speed.
        """
        if not dt > 0:
            raise ArgumentError(f"Sample time must be positive, got {dt}")
        v, u, a = reading
        if abs(a * dt) >= abs(v):
            logger.debug("Lateral acceleration too large for the speed, using dead reckoning")
            return ExplorationService.dead_reckoning_step(pose, reading, dt)
        t = np.linspace(0.0, dt, ODOMETRY_QUADRATURE_PANELS + 1)
        forward = float(simpson(np.sqrt(v * v - (a * t) ** 2), x=t))
        lateral = 0.5 * a * dt * dt
        theta = pose.theta
        x = pose.x + forward * math.cos(theta) + lateral * math.cos(theta + math.pi / 2.0)
        y = pose.y + forward * math.sin(theta) + lateral * math.sin(theta + math.pi / 2.0)
        return UnicycleState(x, y, theta + u * dt)

    @staticmethod
    def read_odometry(v: float, u: float, sigma: float, rng: np.random.Generator) -> OdometryReading:
        """Noisy speed, turn rate and lateral acceleration v u."""
        if sigma <= 0:
            return OdometryReading(v, u, v * u)
        noise = rng.normal(0.0, sigma, size=3)
        return OdometryReading(v + noise[0], u + noise[1], v * u + noise[2])

    @staticmethod
    def odometry_step(
        estimate: UnicycleState,
        truth: UnicycleState,
        reading: OdometryReading,
        model: OdometryModel,
        dt: float,
    ) -> UnicycleState:
        if model is OdometryModel.PERFECT:
            return truth
        if model is OdometryModel.DEAD_RECKONING:
            return ExplorationService.dead_reckoning_step(estimate, reading, dt)
        return ExplorationService.improved_odometry_step(estimate, reading, dt)

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------

    @staticmethod
    def run_exploration(
        world: World2D,
        start: UnicycleState,
        cfg: ExplorerConfig,
        sensor: SensorNode2D,
        step_cap: int | None = None,
    ) -> ExplorationResult:
        """
        Explore a planar world until the occupancy map is complete.

        Returns:
            Result with completed=False when the step cap is hit first
        """
        return ExplorationService._run(world, start, cfg, sensor, step_cap, None)

    @staticmethod
    def run_exploration_3d(
        world: World3D,
        start: UnicycleState,
        cfg: ExplorerConfig,
        sensor: SensorNode2D,
        height: float,
        vertical_range: float,
        vertical_resolution: float = VERTICAL_SCAN_RESOLUTION,
        step_cap: int | None = None,
    ) -> ExplorationResult:
        """
        Planar exploration of the floor footprint with an extra vertical scanner.

        The planar motion is identical to ``run_exploration`` on the footprint
        with the same seed. The voxel map covers the room from the sensor's
        layer upward, which is the part the vertical scanner can observe;
        completion requires both maps to be complete.
        """
        zmin, zmax = world.bounds[2], world.bounds[5]
        if not zmin < height < zmax:
            raise ArgumentError(f"Sensor height {height} outside the room ({zmin}, {zmax})")
        truth = geometry_service.rasterize(world)
        layer = int(math.floor((height - truth.origin[2]) / truth.cell_size))
        layer = min(max(layer, 0), truth.shape[2] - 1)
        origin = truth.origin.copy()
        origin[2] += layer * truth.cell_size
        cropped = RegionGrid(origin, truth.cell_size, truth.labels[:, :, layer:].copy(), {"source": "truth"})
        volume = sensing_service.padded_truth(cropped, pad_below=False)
        vertical = (volume, height, vertical_range, vertical_resolution)
        return ExplorationService._run(world.ground(), start, cfg, sensor, step_cap, vertical)

    @staticmethod
    def _run(
        world: World2D,
        start: UnicycleState,
        cfg: ExplorerConfig,
        sensor: SensorNode2D,
        step_cap: int | None,
        vertical: tuple[RegionGrid, float, float, float] | None,
    ) -> ExplorationResult:
        if world.has_moving_obstacles:
            logger.warning("Exploration assumes a static world; obstacle velocities are ignored")
        cap = int(step_cap if step_cap is not None else config.exploration_step_cap)
        dt = cfg.sample_time
        decision_rng, scan_rng, odometry_rng, vertical_rng = _streams(cfg.seed)
        params = UnicycleParams(cfg.v, cfg.u_max)

        truth = sensing_service.padded_truth(geometry_service.rasterize(world))
        grid = sensing_service.new_map(truth)
        voxels = sensing_service.new_map(vertical[0]) if vertical is not None else None

        pose = start
        estimate = start
        state = ExplorationService.initial_state(cfg)
        trajectory = Trajectory(TRAJECTORY_COLUMNS)
        clearance: list[float] = []
        times: list[float] = []
        estimates: list[tuple[float, float, float]] = []
        transitions: list[tuple[float, str, str]] = []
        completed = False
        completion_time: float | None = None

        logger.info(f"Exploration started (seed={cfg.seed}, q0={cfg.q0}, step cap {cap})")
        steps = 0
        while steps < cap:
            t = steps * dt
            scan = sensing_service.raycast_scan(
                truth, sensor.moved_to(pose.x, pose.y, pose.theta), cfg.noise_sigma, scan_rng
            )
            sensing_service.grid_update_from_scan(grid, (estimate.x, estimate.y, estimate.theta), scan)
            if voxels is not None and vertical is not None:
                volume, height, vrange, vres = vertical
                vscan = sensing_service.vertical_scan(
                    volume, (pose.x, pose.y, pose.theta), height, vrange, vres, cfg.noise_sigma, vertical_rng
                )
                sensing_service.voxel_update_vertical_scan(
                    voxels, (estimate.x, estimate.y, estimate.theta), height, vscan
                )

            gap = float(geometry_service.world_clearance(world, pose.position)[0])
            trajectory.append(t, pose.x, pose.y, pose.theta, state.mode.value, gap)
            clearance.append(gap)
            times.append(t)
            estimates.append((estimate.x, estimate.y, estimate.theta))
            steps += 1

            if sensing_service.map_complete(grid) and (voxels is None or sensing_service.map_complete(voxels)):
                completed = True
                completion_time = t
                break

            decision = ExplorationService.explorer_control(estimate, scan, state, cfg, decision_rng)
            if decision.state.mode is not state.mode:
                transitions.append((t, state.mode.value, decision.state.mode.value))
            state = decision.state
            u = max(-cfg.u_max, min(cfg.u_max, decision.u))
            new_pose = vehicle_service.step_unicycle(pose, params, u, dt)
            reading = ExplorationService.read_odometry(cfg.v, u, cfg.odometry_noise, odometry_rng)
            estimate = ExplorationService.odometry_step(estimate, new_pose, reading, cfg.odometry, dt)
            pose = new_pose

        if completed:
            logger.info(f"Map complete at t={completion_time:.2f} after {steps} steps")
        else:
            logger.warning(f"Exploration timed out after {steps} steps")
        return ExplorationResult(
            trajectory=trajectory,
            grid=grid,
            completed=completed,
            completion_time=completion_time,
            steps=steps,
            clearance=clearance,
            times=times,
            voxels=voxels,
            estimates=estimates,
            transitions=transitions,
        )


# Global service instance
exploration_service = ExplorationService()
