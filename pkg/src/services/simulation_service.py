"""Closed-loop scenario runs for every planning, navigation and exploration mode."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from src.config import config
from src.models.control import Gains3D
from src.models.geometry import RegionGrid, World2D
from src.models.metrics import RunArtifacts, RunMetrics, RunStatus, Trajectory
from src.models.planning import FieldGains, PathPolyline, PredictedWorld, RelaxResult
from src.models.scenario import Scenario
from src.models.sensing import ShrinkParams
from src.models.vehicle import UnicycleState, Vehicle3State
from src.services.exploration_service import exploration_service
from src.services.geometry_service import geometry_service
from src.services.potential_field_service import GridField, RelaxContext, potential_field_service
from src.services.roadmap_service import roadmap_service
from src.services.sensing_service import sensing_service
from src.services.tangent_graph_service import tangent_graph_service
from src.services.tracking_service import tracking_service
from src.services.vehicle_service import vehicle_service
from src.shared.constants import (
    CELL_FREE,
    CELL_OCCUPIED,
    MODE_EXPLORE2D,
    MODE_EXPLORE3D,
    MODE_NAVIGATE2D,
    MODE_NAVIGATE3D,
    MODE_PLAN2D,
)
from src.shared.exceptions import ArgumentError, PlanningError

logger = logging.getLogger(__name__)

PLANAR_COLUMNS = ("t", "robot", "x", "y", "theta", "min_clearance")
SPATIAL_COLUMNS = ("t", "robot", "x", "y", "z", "min_clearance")


@dataclass(frozen=True)
class RunOptions:
    """Command-line switches that change how a scenario is run."""

    fast_candidates: bool = False
    smooth_control: bool = False


@dataclass(eq=False)
class RunOutcome:
    metrics: RunMetrics
    artifacts: RunArtifacts


@dataclass(eq=False)
class _Recorder:
    """Per-instant trajectory rows, clearance trace and robot separation."""

    trajectory: Trajectory
    times: list[float] = field(default_factory=list)
    clearance: list[float] = field(default_factory=list)
    travelled: float = 0.0
    separation: float = math.inf

    def record(self, t: float, rows: list[tuple], clearance: float, positions: np.ndarray) -> None:
        for row in rows:
            self.trajectory.append(t, *row)
        self.times.append(t)
        self.clearance.append(clearance)
        if len(positions) > 1:
            gaps = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
            gaps[np.diag_indices(len(positions))] = np.inf
            self.separation = min(self.separation, float(gaps.min()))

    def metrics(self, scenario: Scenario, status: RunStatus, failure: str | None = None) -> RunMetrics:
        multi = len(scenario.robots) > 1
        return RunMetrics(
            status=status,
            steps=len(self.times),
            times=self.times,
            clearance_trace=self.clearance,
            path_length=self.travelled,
            completion_time=self.times[-1] if status is RunStatus.REACHED and self.times else None,
            seed=scenario.seed,
            min_robot_separation=self.separation if multi and math.isfinite(self.separation) else None,
            failure=failure,
        )


def _outlines(world: World2D) -> list[np.ndarray]:
    return [o.outline() for o in world.obstacles]


def _plain_bounds(world: World2D) -> tuple[float, float, float, float]:
    return tuple(float(b) for b in world.bounds)  # type: ignore[return-value]


class SimulationService:
    """Service for running scenarios end to end."""

    @staticmethod
    def run_scenario(scenario: Scenario, options: RunOptions | None = None) -> RunOutcome:
        """
        Run a validated scenario and collect metrics and artifacts.

        Planner failures end the run with a FAILED status and whatever was
        recorded up to that point; they are not raised.

        Args:
            scenario: Validated scenario
            options: Command-line switches

        Returns:
            Metrics and artifacts for the output writers
        """
        options = options or RunOptions()
        runners: dict[str, Callable[[Scenario, RunOptions], RunOutcome]] = {
            MODE_PLAN2D: SimulationService._run_plan2d,
            MODE_NAVIGATE2D: SimulationService._run_navigate2d,
            MODE_NAVIGATE3D: SimulationService._run_navigate3d,
            MODE_EXPLORE2D: SimulationService._run_explore,
            MODE_EXPLORE3D: SimulationService._run_explore,
        }
        logger.info("=" * 60)
        logger.info(f"Running {scenario.mode} scenario with {len(scenario.robots)} robot(s), seed {scenario.seed}")
        logger.info("=" * 60)
        outcome = runners[scenario.mode](scenario, options)
        m = outcome.metrics
        logger.info(
            f"Run finished: {m.status.value} after {m.steps} step(s), min clearance {m.min_clearance:.3f} m"
        )
        return outcome

    # ------------------------------------------------------------------
    # Shared planar tracking loop
    # ------------------------------------------------------------------

    @staticmethod
    def _track_planar(
        scenario: Scenario,
        world: World2D,
        plan: Callable[[int, int, UnicycleState, list[UnicycleState]], PathPolyline],
        options: RunOptions,
        artifacts: RunArtifacts,
        step_cap: int,
    ) -> RunOutcome:
        """
        Advance every robot one sampling interval at a time along the path ``plan`` returns.

        ``plan(robot, k, state, states)`` is called once per robot and step;
        a PlanningError from it ends the run as FAILED.
        """
        assert scenario.planner is not None
        planner = scenario.planner
        delta = planner.delta
        gains = scenario.tracking_gains()
        slope = scenario.smooth_slope(force=options.smooth_control)
        substeps = planner.substeps or config.tracking_substeps
        states = [r.unicycle() for r in scenario.robots]
        targets = [np.asarray(r.target[:2], dtype=float) for r in scenario.robots]  # type: ignore[index]
        errors: list[float | None] = [None] * len(states)
        active = [True] * len(states)
        recorder = _Recorder(Trajectory(PLANAR_COLUMNS))
        artifacts.trajectory = recorder.trajectory

        def rows(t: float) -> tuple[list[tuple], float]:
            positions = np.array([s.position for s in states])
            gaps = geometry_service.world_clearance(world.at_time(t), positions)
            return [(i, s.x, s.y, s.theta, float(g)) for i, (s, g) in enumerate(zip(states, gaps, strict=True))], float(
                gaps.min()
            )

        def finish(status: RunStatus, failure: str | None = None) -> RunOutcome:
            return RunOutcome(recorder.metrics(scenario, status, failure), artifacts)

        for k in range(step_cap):
            t = k * delta
            current, clearance = rows(t)
            recorder.record(t, current, clearance, np.array([s.position for s in states]))
            for i, state in enumerate(states):
                if active[i] and np.linalg.norm(state.position - targets[i]) < scenario.robots[i].v * delta:
                    active[i] = False
                    logger.info(f"Robot {i} reached its target at t={t:.2f}")
            if not any(active):
                return finish(RunStatus.REACHED)

            interval_min = math.inf
            for i, state in enumerate(states):
                if not active[i]:
                    continue
                try:
                    path = plan(i, k, state, states)
                except PlanningError as e:
                    logger.error(f"Robot {i} planning failed at t={t:.2f}: {e}")
                    return finish(RunStatus.FAILED, e.user_message)
                result = tracking_service.track_step(
                    state, scenario.robots[i].params, path, gains, delta, substeps, errors[i], slope
                )
                errors[i] = result.error  # type: ignore[assignment]
                recorder.travelled += sum(
                    float(np.linalg.norm(b.position - a.position))
                    for a, b in zip([state, *result.states[:-1]], result.states, strict=True)
                )
                if result.states:
                    sub = np.array([s.position for s in result.states])
                    sub_t = t + delta * np.arange(1, len(sub) + 1) / len(sub)
                    for p, ts in zip(sub, sub_t, strict=True):
                        interval_min = min(
                            interval_min, float(geometry_service.world_clearance(world.at_time(ts), p)[0])
                        )
                states[i] = result.state  # type: ignore[assignment]
            if interval_min < recorder.clearance[-1]:
                recorder.clearance[-1] = interval_min

        logger.warning(f"Navigation timed out after {step_cap} steps")
        return finish(RunStatus.TIMEOUT)

    # ------------------------------------------------------------------
    # plan2d
    # ------------------------------------------------------------------

    @staticmethod
    def estimate_velocities(world: World2D, delta: float) -> np.ndarray:
        """Obstacle velocities from two rasterized observations one sampling interval apart."""
        lower = np.asarray(world.bounds[:2], dtype=float)
        upper = np.asarray(world.bounds[2:], dtype=float)
        template = geometry_service.empty_grid(lower, upper, world.cell_size)
        velocities = []
        for i, obstacle in enumerate(world.obstacles):
            first = template.with_labels(
                np.where(geometry_service.obstacle_mask(template, obstacle), CELL_OCCUPIED, CELL_FREE).astype(np.int8)
            )
            second = template.with_labels(
                np.where(
                    geometry_service.obstacle_mask(template, obstacle.at_time(delta)), CELL_OCCUPIED, CELL_FREE
                ).astype(np.int8)
            )
            estimate = potential_field_service.estimate_obstacle_velocity(first, second, delta)
            logger.info(
                f"Obstacle {i} velocity estimate ({estimate.velocity[0]:.3f}, {estimate.velocity[1]:.3f}) m/s"
                + ("" if estimate.reliable else " (unreliable)")
            )
            velocities.append(estimate.velocity)
        return np.array(velocities).reshape(-1, 2)

    @staticmethod
    def _run_plan2d(scenario: Scenario, options: RunOptions) -> RunOutcome:
        assert scenario.planner is not None
        planner = scenario.planner
        world = scenario.world.world2d()
        delta = planner.delta
        if planner.estimate_velocities:
            velocities = SimulationService.estimate_velocities(world, delta)
        else:
            velocities = np.array([o.velocity for o in world.obstacles], dtype=float).reshape(-1, 2)

        artifacts = RunArtifacts(Trajectory(PLANAR_COLUMNS), planner.safety_margin, _plain_bounds(world), _outlines(world))
        paths: dict[int, PathPolyline] = {}
        for i, robot in enumerate(scenario.robots):
            spacing = robot.v * delta
            predicted = PredictedWorld(
                world.bounds, world.obstacles, velocities, delta, tuple(paths[j].points for j in sorted(paths))
            )
            logger.info(f"Planning robot {i} ({len(paths)} earlier robot path(s) as moving obstacles)")
            try:
                search = potential_field_service.homotopy_search(
                    np.asarray(robot.start[:2], dtype=float),
                    np.asarray(robot.target, dtype=float),
                    predicted,
                    scenario.field_gains(spacing),
                    spacing,
                    planner.safety_margin,
                )
            except PlanningError as e:
                logger.error(f"Robot {i} has no path: {e}")
                artifacts.paths = paths
                metrics = RunMetrics(RunStatus.FAILED, 0, [], [], seed=scenario.seed, failure=e.user_message)
                return RunOutcome(metrics, artifacts)
            paths[i] = search.path
        artifacts.paths = paths

        def fixed(i: int, k: int, state: UnicycleState, states: list[UnicycleState]) -> PathPolyline:
            return paths[i]

        longest = max(len(p) for p in paths.values())
        cap = scenario.step_cap or max(4 * longest, 50)
        return SimulationService._track_planar(scenario, world, fixed, options, artifacts, cap)

    # ------------------------------------------------------------------
    # navigate2d
    # ------------------------------------------------------------------

    @staticmethod
    def plan_step_2d(
        area: RegionGrid,
        pose: UnicycleState,
        target: np.ndarray,
        r_min: float,
        spacing: float,
        shrink: ShrinkParams,
        gains: FieldGains,
        fast: bool = False,
    ) -> tuple[PathPolyline, str]:
        """
        One receding-horizon planning step on a fused unoccupied area.

        Returns:
            Tuple of (selected path, exported candidate graph)

        Raises:
            PlanningError: no candidate survives adjustment
        """
        region = geometry_service.reduce(area, shrink.safety_margin)
        circles = vehicle_service.initial_circles(pose, r_min)
        graph, candidates = tangent_graph_service.plan(region, target, pose, circles)
        field_ = GridField(area, shrink.safety_margin, shrink)

        def relax(path: PathPolyline) -> RelaxResult:
            first = path.points[1] if len(path) > 1 else target
            circle = potential_field_service.select_initial_circle(pose.heading, pose.position, first, circles)
            ctx = RelaxContext(
                field=field_,
                spacing=spacing,
                target=target,
                circle=circle,
                circle_fallback=pose.normal,
                add_remove=True,
            )
            return potential_field_service.relax_path(path, ctx, gains)

        path = tangent_graph_service.select_candidate(candidates, spacing, relax, fast)
        return path, tangent_graph_service.export_graph(graph)

    @staticmethod
    def _run_navigate2d(scenario: Scenario, options: RunOptions) -> RunOutcome:
        assert scenario.planner is not None
        planner = scenario.planner
        world = scenario.world.world2d()
        shrink = scenario.shrink_params()
        nodes = [n.node() for n in scenario.sensors.nodes]
        rng = np.random.default_rng(scenario.seed)
        fast = options.fast_candidates or planner.fast_candidates
        artifacts = RunArtifacts(Trajectory(PLANAR_COLUMNS), planner.safety_margin, _plain_bounds(world), _outlines(world))
        previous: dict[int, PathPolyline] = {}
        failures: dict[int, int] = {}
        observed: dict[int, list] = {}

        def plan(i: int, k: int, state: UnicycleState, states: list[UnicycleState]) -> PathPolyline:
            robot = scenario.robots[i]
            spacing = robot.v * planner.delta
            if k not in observed:
                observed.clear()
                truth = geometry_service.rasterize(world.at_time(k * planner.delta))
                scans = [(n, sensing_service.raycast_scan(truth, n, scenario.sensors.noise_sigma, rng)) for n in nodes]
                observed[k] = [truth, scans]
            truth, scans = observed[k]
            others = np.array([s.position for j, s in enumerate(states) if j != i]).reshape(-1, 2)
            area = sensing_service.fuse_unoccupied_area(scans, truth, others, planner.robot_radius)
            try:
                path, graph_text = SimulationService.plan_step_2d(
                    area,
                    state,
                    np.asarray(robot.target, dtype=float),
                    vehicle_service.min_turn_radius(robot.params),
                    spacing,
                    shrink,
                    scenario.field_gains(spacing),
                    fast,
                )
            except PlanningError as e:
                failures[i] = failures.get(i, 0) + 1
                remainder = previous.get(i)
                if remainder is None or len(remainder) < 2 or failures[i] > shrink.horizon:
                    raise
                # The last accepted path stays safe for T steps
                logger.warning(f"Robot {i} replanning failed ({e}); following the previous path")
                kept = PathPolyline(remainder.points[1:], remainder.spacing)
                previous[i] = kept
                artifacts.paths[i] = kept
                return kept
            failures[i] = 0
            previous[i] = path
            artifacts.paths[i] = path
            artifacts.graph_text = graph_text
            return path

        cap = scenario.step_cap or config.navigation_step_cap
        return SimulationService._track_planar(scenario, world, plan, options, artifacts, cap)

    # ------------------------------------------------------------------
    # navigate3d
    # ------------------------------------------------------------------

    @staticmethod
    def replan_3d(
        previous: PathPolyline,
        state: Vehicle3State,
        area: RegionGrid,
        shrink: ShrinkParams,
        gains: FieldGains,
        target: np.ndarray,
        r_min: float,
        other_paths: tuple[np.ndarray, ...],
    ) -> PathPolyline | None:
        """Re-relax the previous path from the current position; None when it does not converge."""
        rest = previous.points[2:] if len(previous) > 2 else np.atleast_2d(target)
        seed = PathPolyline(np.vstack([state.s, rest]), previous.spacing)
        torus = vehicle_service.initial_torus(state, r_min)
        result = roadmap_service.relax3(seed, area, shrink, torus, gains, target, other_paths)
        return result.path if result.converged else None

    @staticmethod
    def _run_navigate3d(scenario: Scenario, options: RunOptions) -> RunOutcome:
        assert scenario.planner is not None
        planner = scenario.planner
        world3 = scenario.world.world3d()
        ground = world3.ground()
        shrink = scenario.shrink_params()
        cameras = [c.camera() for c in scenario.sensors.cameras]
        rng = np.random.default_rng(scenario.seed)
        noise_rng = np.random.default_rng(np.random.SeedSequence(scenario.seed).spawn(1)[0])
        gains3: Gains3D = planner.tracking_3d.gains()
        slope = scenario.smooth_slope(force=options.smooth_control)
        substeps = planner.substeps or config.tracking_substeps
        delta = planner.delta

        states = [r.vehicle3() for r in scenario.robots]
        targets = [np.asarray(r.target, dtype=float) for r in scenario.robots]
        prm = scenario.prm_params(config.prm_samples, config.prm_neighbors)
        errors: list = [None] * len(states)
        active = [True] * len(states)
        paths: dict[int, PathPolyline] = {}
        failures: dict[int, int] = {}
        recorder = _Recorder(Trajectory(SPATIAL_COLUMNS))
        artifacts = RunArtifacts(
            recorder.trajectory, planner.safety_margin, _plain_bounds(ground), _outlines(ground), paths
        )

        def finish(status: RunStatus, failure: str | None = None) -> RunOutcome:
            return RunOutcome(recorder.metrics(scenario, status, failure), artifacts)

        cap = scenario.step_cap or config.navigation_step_cap
        for k in range(cap):
            t = k * delta
            truth = geometry_service.rasterize(world3.at_time(t))
            positions = np.array([s.s for s in states])
            gaps = truth.query(positions).distance
            rows = [(i, *map(float, s.s), float(g)) for i, (s, g) in enumerate(zip(states, gaps, strict=True))]
            recorder.record(t, rows, float(gaps.min()), positions)
            for i in range(len(states)):
                if active[i] and np.linalg.norm(states[i].s - targets[i]) < scenario.robots[i].v * delta:
                    active[i] = False
                    logger.info(f"Robot {i} reached its target at t={t:.2f}")
            if not any(active):
                return finish(RunStatus.REACHED)

            observations = [
                (c, sensing_service.render_depth(truth, c, scenario.sensors.noise_sigma, noise_rng)) for c in cameras
            ]
            interval_min = math.inf
            for i, state in enumerate(states):
                if not active[i]:
                    continue
                robot = scenario.robots[i]
                others = np.array([s.s for j, s in enumerate(states) if j != i]).reshape(-1, 3)
                area = sensing_service.fuse_free_space_3d(observations, truth, others, planner.robot_radius)
                other_paths = tuple(
                    paths[j].points if j in paths else np.atleast_2d(states[j].s) for j in range(len(states)) if j != i
                )
                gains = scenario.field_gains(robot.v * delta)
                r_min = vehicle_service.min_turn_radius(robot.params)
                path = None
                if i in paths:
                    path = SimulationService.replan_3d(
                        paths[i], state, area, shrink, gains, targets[i], r_min, other_paths
                    )
                if path is None:
                    try:
                        rough = roadmap_service.rough_path(area, state, targets[i], prm, shrink, rng)
                        torus = vehicle_service.initial_torus(state, r_min)
                        result = roadmap_service.relax3(rough, area, shrink, torus, gains, targets[i], other_paths)
                        if not result.converged:
                            raise PlanningError(f"Rough path adjustment failed: {result.abandoned_reason}")
                        path = result.path
                        failures[i] = 0
                    except PlanningError as e:
                        failures[i] = failures.get(i, 0) + 1
                        if i not in paths or len(paths[i]) < 2 or failures[i] > shrink.horizon:
                            logger.error(f"Robot {i} planning failed at t={t:.2f}: {e}")
                            return finish(RunStatus.FAILED, e.user_message)
                        logger.warning(f"Robot {i} replanning failed ({e}); following the previous path")
                        path = PathPolyline(paths[i].points[1:], paths[i].spacing)
                paths[i] = path

                result3 = tracking_service.track_step_3d(
                    state, robot.v, path, gains3, robot.u_max, delta, substeps, errors[i], slope
                )
                errors[i] = result3.error
                chain = [state, *result3.states]
                recorder.travelled += sum(
                    float(np.linalg.norm(b.s - a.s)) for a, b in zip(chain[:-1], chain[1:], strict=True)
                )
                if result3.states:
                    sub = np.array([s.s for s in result3.states])
                    interval_min = min(interval_min, float(truth.query(sub).distance.min()))
                states[i] = result3.state  # type: ignore[assignment]
            if interval_min < recorder.clearance[-1]:
                recorder.clearance[-1] = interval_min

        logger.warning(f"Navigation timed out after {cap} steps")
        return finish(RunStatus.TIMEOUT)

    # ------------------------------------------------------------------
    # Exploration
    # ------------------------------------------------------------------

    @staticmethod
    def _run_explore(scenario: Scenario, options: RunOptions) -> RunOutcome:
        assert scenario.explorer is not None
        explorer = scenario.explorer
        cfg = scenario.explorer_config(smooth=options.smooth_control)
        robot = scenario.robots[0]
        start = robot.unicycle()
        sensor = scenario.explorer_sensor()
        cap = scenario.step_cap or config.exploration_step_cap
        if scenario.mode == MODE_EXPLORE3D:
            world3 = scenario.world.world3d()
            planar = world3.ground()
            assert explorer.sensor_height is not None and explorer.vertical_range is not None
            result = exploration_service.run_exploration_3d(
                world3,
                start,
                cfg,
                sensor,
                explorer.sensor_height,
                explorer.vertical_range,
                explorer.vertical_resolution,
                cap,
            )
        elif scenario.mode == MODE_EXPLORE2D:
            planar = scenario.world.world2d()
            result = exploration_service.run_exploration(planar, start, cfg, sensor, cap)
        else:
            raise ArgumentError(f"Not an exploration mode: {scenario.mode}")

        xy = np.column_stack([result.trajectory.column("x"), result.trajectory.column("y")])
        travelled = float(np.linalg.norm(np.diff(xy, axis=0), axis=1).sum()) if len(xy) > 1 else 0.0
        metrics = RunMetrics(
            status=RunStatus.COMPLETED if result.completed else RunStatus.TIMEOUT,
            steps=result.steps,
            times=result.times,
            clearance_trace=result.clearance,
            path_length=travelled,
            completion_time=result.completion_time,
            seed=scenario.seed,
            q0=cfg.q0,
        )
        artifacts = RunArtifacts(
            result.trajectory,
            cfg.d0,
            _plain_bounds(planar),
            _outlines(planar),
            grid=result.grid,
            voxels=result.voxels,
        )
        return RunOutcome(metrics, artifacts)


# Global service instance
simulation_service = SimulationService()
