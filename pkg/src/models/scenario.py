"""Scenario file schema and conversion to planner value types."""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.control import ExplorerConfig, Gains2D, Gains3D, OdometryModel
from src.models.geometry import (
    BoxObstacle3,
    DiskObstacle,
    Obstacle2,
    Obstacle3,
    PolyObstacle,
    PrismObstacle,
    World2D,
    World3D,
)
from src.models.planning import FieldGains, Prm3Params
from src.models.sensing import DepthCamera3D, SensorNode2D, ShrinkParams
from src.models.vehicle import UnicycleParams, UnicycleState, Vehicle3State
from src.shared.constants import (
    DEFAULT_SMOOTH_SLOPE_PER_SIGMA,
    MODE_EXPLORE2D,
    MODE_EXPLORE3D,
    MODE_NAVIGATE2D,
    MODE_NAVIGATE3D,
    MODE_PLAN2D,
    TOF_FOV,
    TOF_MAX_RANGE,
    TOF_MIN_RANGE,
    TOF_RESOLUTION,
    VERTICAL_SCAN_RESOLUTION,
)

Mode = Literal["plan2d", "navigate2d", "navigate3d", "explore2d", "explore3d"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ObstacleSpec(_Section):
    """One obstacle; ``kind`` selects which geometry fields apply."""

    kind: Literal["polygon", "disk", "box", "prism"]
    points: tuple[tuple[float, float], ...] | None = None
    center: tuple[float, float] | None = None
    radius: float | None = Field(default=None, gt=0)
    min: tuple[float, float, float] | None = None
    max: tuple[float, float, float] | None = None
    height: float | None = Field(default=None, gt=0)
    velocity: tuple[float, ...] | None = None

    @model_validator(mode="after")
    def _check_fields(self) -> ObstacleSpec:
        required = {
            "polygon": ("points",),
            "disk": ("center", "radius"),
            "box": ("min", "max"),
            "prism": ("points", "height"),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} obstacle needs {', '.join(missing)}")
        if self.kind in ("polygon", "prism") and self.points is not None and len(self.points) < 3:
            raise ValueError("polygon needs at least 3 points")
        return self

    def planar(self) -> Obstacle2:
        velocity = tuple(self.velocity[:2]) if self.velocity else (0.0, 0.0)
        if self.kind == "disk":
            assert self.center is not None and self.radius is not None
            return DiskObstacle(self.center, self.radius, velocity)  # type: ignore[arg-type]
        assert self.points is not None
        return PolyObstacle(self.points, velocity)  # type: ignore[arg-type]

    def spatial(self) -> Obstacle3:
        if self.kind == "box":
            assert self.min is not None and self.max is not None
            velocity = tuple(self.velocity) if self.velocity else (0.0, 0.0, 0.0)
            return BoxObstacle3(self.min, self.max, velocity)  # type: ignore[arg-type]
        assert self.height is not None
        return PrismObstacle(self.planar(), self.height)


class WorldSpec(_Section):
    bounds: tuple[float, ...]
    cell_size: float = Field(default=0.1, gt=0)
    obstacles: tuple[ObstacleSpec, ...] = ()

    @model_validator(mode="after")
    def _check_bounds(self) -> WorldSpec:
        if len(self.bounds) not in (4, 6):
            raise ValueError("bounds need 4 values (2D) or 6 values (3D)")
        half = len(self.bounds) // 2
        if any(hi <= lo for lo, hi in zip(self.bounds[:half], self.bounds[half:], strict=True)):
            raise ValueError("bounds maximum must exceed minimum")
        return self

    @property
    def is_3d(self) -> bool:
        return len(self.bounds) == 6

    def world2d(self) -> World2D:
        return World2D(self.bounds, tuple(o.planar() for o in self.obstacles), self.cell_size)  # type: ignore[arg-type]

    def world3d(self) -> World3D:
        return World3D(self.bounds, tuple(o.spatial() for o in self.obstacles), self.cell_size)  # type: ignore[arg-type]


class RobotSpec(_Section):
    """Robot start, target and kinematic limits.

    Planar starts are ``[x, y, theta]``; 3D starts are ``[x, y, z]`` with a
    separate ``heading`` direction.
    """

    start: tuple[float, ...]
    target: tuple[float, ...] | None = None
    heading: tuple[float, float, float] | None = None
    v: float = Field(gt=0)
    u_max: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_start(self) -> RobotSpec:
        if len(self.start) != 3:
            raise ValueError("start needs 3 values")
        if self.heading is not None and not np.linalg.norm(self.heading) > 0:
            raise ValueError("heading must be a non-zero vector")
        return self

    @property
    def params(self) -> UnicycleParams:
        return UnicycleParams(self.v, self.u_max)

    def unicycle(self) -> UnicycleState:
        return UnicycleState(*self.start)

    def vehicle3(self) -> Vehicle3State:
        heading = np.asarray(self.heading if self.heading is not None else (1.0, 0.0, 0.0), dtype=float)
        return Vehicle3State(np.asarray(self.start, dtype=float), heading / np.linalg.norm(heading))


class GainsSpec(_Section):
    """Field gain overrides; pull and threshold default to fractions of the spacing."""

    interval: float | None = Field(default=None, gt=0)
    repulsion: float | None = Field(default=None, gt=0)
    pull: float | None = Field(default=None, gt=0)
    circle: float | None = Field(default=None, gt=0)
    attenuation: float | None = Field(default=None, gt=0, lt=1)
    threshold: float | None = Field(default=None, gt=0)
    under: float | None = Field(default=None, gt=0)
    over: float | None = Field(default=None, gt=0)


class Tracking3DSpec(_Section):
    lam_d: float = Field(default=2.0, gt=0)
    sigma_d: float = Field(default=1.0, gt=0)
    lam_a: float = Field(default=3.0, gt=0)
    sigma_a: float = Field(default=1.0, gt=0)
    w_d: float = Field(default=1.0, gt=0)
    w_a: float = Field(default=1.0, gt=0)

    def gains(self) -> Gains3D:
        return Gains3D(**self.model_dump())


class PlannerSpec(_Section):
    delta: float = Field(gt=0)
    safety_margin: float = Field(gt=0)
    horizon: int = Field(default=5, ge=1)
    v_max: float = Field(default=0.0, ge=0)
    robot_radius: float = Field(default=0.0, ge=0)
    estimate_velocities: bool = False
    fast_candidates: bool = False
    smooth_control: bool = False
    smooth_slope: float | None = Field(default=None, gt=0)
    lam: float = Field(default=1.0, gt=0)
    sigma: float = Field(default=1.0, gt=0)
    gains: GainsSpec = GainsSpec()
    tracking_3d: Tracking3DSpec = Tracking3DSpec()
    prm_samples: int | None = Field(default=None, ge=1)
    prm_neighbors: int | None = Field(default=None, ge=1)
    substeps: int | None = Field(default=None, ge=1)


class NodeSpec(_Section):
    pose: tuple[float, float, float]
    range: float = Field(gt=0)
    fov: float = Field(default=2.0 * math.pi, gt=0, le=2.0 * math.pi + 1e-9)
    resolution: float = Field(default=math.radians(1.0), gt=0)

    def node(self) -> SensorNode2D:
        return SensorNode2D(*self.pose, self.range, self.fov, self.resolution)


class CameraSpec(_Section):
    position: tuple[float, float, float]
    yaw: float = 0.0
    pitch: float = 0.0
    fov_h: float = Field(default=TOF_FOV, gt=0, lt=math.pi)
    fov_v: float = Field(default=TOF_FOV, gt=0, lt=math.pi)
    width: int = Field(default=TOF_RESOLUTION, ge=1)
    height: int = Field(default=TOF_RESOLUTION, ge=1)
    min_range: float = Field(default=TOF_MIN_RANGE, ge=0)
    max_range: float = Field(default=TOF_MAX_RANGE, gt=0)

    def camera(self) -> DepthCamera3D:
        return DepthCamera3D(
            self.position,
            self.yaw,
            self.pitch,
            self.fov_h,
            self.fov_v,
            self.width,
            self.height,
            self.min_range,
            self.max_range,
        )


class SensorsSpec(_Section):
    nodes: tuple[NodeSpec, ...] = ()
    cameras: tuple[CameraSpec, ...] = ()
    noise_sigma: float = Field(default=0.0, ge=0)


class ExplorerSpec(_Section):
    d0: float = Field(gt=0)
    q0: float = Field(gt=0, lt=1)
    theta_trig: float = Field(gt=0)
    d_trig: float = Field(gt=0)
    sample_time: float = Field(gt=0)
    sensor_range: float = Field(gt=0)
    resolution: float = Field(default=math.radians(1.0), gt=0)
    pause: float | None = Field(default=None, gt=0)
    lam: float = Field(default=1.0, gt=0)
    sigma: float = Field(default=1.0, gt=0)
    noise_sigma: float = Field(default=0.0, ge=0)
    odometry: OdometryModel = OdometryModel.PERFECT
    odometry_noise: float = Field(default=0.0, ge=0)
    sensor_height: float | None = Field(default=None, gt=0)
    vertical_range: float | None = Field(default=None, gt=0)
    vertical_resolution: float = Field(default=VERTICAL_SCAN_RESOLUTION, gt=0)


class Scenario(_Section):
    """A complete run description."""

    mode: Mode
    seed: int = 0
    step_cap: int | None = Field(default=None, ge=1)
    output_dir: str | None = None
    world: WorldSpec
    robots: tuple[RobotSpec, ...] = Field(min_length=1)
    planner: PlannerSpec | None = None
    sensors: SensorsSpec = SensorsSpec()
    explorer: ExplorerSpec | None = None

    @model_validator(mode="after")
    def _check_mode(self) -> Scenario:
        spatial = self.mode in (MODE_NAVIGATE3D, MODE_EXPLORE3D)
        if spatial != self.world.is_3d:
            raise ValueError(f"mode {self.mode} needs {'6' if spatial else '4'} world bounds")
        if self.mode in (MODE_PLAN2D, MODE_NAVIGATE2D, MODE_NAVIGATE3D):
            if self.planner is None:
                raise ValueError(f"mode {self.mode} needs a planner section")
            if any(r.target is None for r in self.robots):
                raise ValueError(f"mode {self.mode} needs a target for every robot")
        if self.mode == MODE_NAVIGATE2D and not self.sensors.nodes:
            raise ValueError("navigate2d needs at least one sensor node")
        if self.mode == MODE_NAVIGATE3D and not self.sensors.cameras:
            raise ValueError("navigate3d needs at least one camera")
        if self.mode in (MODE_EXPLORE2D, MODE_EXPLORE3D):
            if self.explorer is None:
                raise ValueError(f"mode {self.mode} needs an explorer section")
            if len(self.robots) != 1:
                raise ValueError("exploration runs a single robot")
        if self.mode == MODE_EXPLORE3D:
            assert self.explorer is not None
            if self.explorer.sensor_height is None or self.explorer.vertical_range is None:
                raise ValueError("explore3d needs explorer.sensor_height and explorer.vertical_range")
        return self

    # ------------------------------------------------------------------
    # Conversions
    # ------------------------------------------------------------------

    @property
    def spacing(self) -> float:
        """Path spacing L = v * delta of the first robot."""
        assert self.planner is not None
        return self.robots[0].v * self.planner.delta

    def field_gains(self, spacing: float | None = None) -> FieldGains:
        assert self.planner is not None
        overrides = {k: v for k, v in self.planner.gains.model_dump().items() if v is not None}
        return FieldGains.for_spacing(spacing or self.spacing, **overrides)

    def shrink_params(self) -> ShrinkParams:
        assert self.planner is not None
        p = self.planner
        return ShrinkParams(p.delta, p.v_max, p.horizon, p.safety_margin, p.robot_radius)

    def tracking_gains(self) -> Gains2D:
        assert self.planner is not None
        return Gains2D(self.planner.lam, self.planner.sigma)

    def smooth_slope(self, force: bool = False) -> float | None:
        """Slope of the bounded switch when smooth control is on, else None."""
        assert self.planner is not None
        if not (force or self.planner.smooth_control):
            return None
        return self.planner.smooth_slope or DEFAULT_SMOOTH_SLOPE_PER_SIGMA / self.planner.sigma

    def prm_params(self, samples: int, neighbors: int) -> Prm3Params:
        assert self.planner is not None
        robot = self.robots[0]
        return Prm3Params(
            self.planner.prm_samples or samples,
            self.planner.prm_neighbors or neighbors,
            self.spacing,
            robot.u_max,
            robot.v,
        )

    def explorer_config(self, smooth: bool = False) -> ExplorerConfig:
        assert self.explorer is not None
        e = self.explorer
        robot = self.robots[0]
        return ExplorerConfig(
            d0=e.d0,
            q0=e.q0,
            theta_trig=e.theta_trig,
            d_trig=e.d_trig,
            v=robot.v,
            u_max=robot.u_max,
            sample_time=e.sample_time,
            seed=self.seed,
            pause=e.pause,
            lam=e.lam,
            sigma=e.sigma,
            smooth=smooth,
            noise_sigma=e.noise_sigma,
            odometry=e.odometry,
            odometry_noise=e.odometry_noise,
        )

    def explorer_sensor(self) -> SensorNode2D:
        assert self.explorer is not None
        x, y, theta = self.robots[0].start
        return SensorNode2D(x, y, theta, self.explorer.sensor_range, 2.0 * math.pi, self.explorer.resolution)
