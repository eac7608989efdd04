"""Sensor types: range finders, scans, depth cameras and time-window shrinkage."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from src.shared.constants import TOF_FOV, TOF_MAX_RANGE, TOF_MIN_RANGE, TOF_RESOLUTION
from src.shared.exceptions import ArgumentError


@dataclass(frozen=True)
class SensorNode2D:
    """Planar range finder at a fixed or robot-mounted pose."""

    x: float
    y: float
    theta: float
    range: float
    fov: float = 2.0 * math.pi
    angular_resolution: float = math.radians(1.0)

    def __post_init__(self) -> None:
        if not self.range > 0:
            raise ArgumentError(f"Sensor range must be positive, got {self.range}")
        if not 0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise ArgumentError(f"Sensor field of view must be in (0, 2pi], got {self.fov}")
        if not self.angular_resolution > 0:
            raise ArgumentError("Angular resolution must be positive")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def full_circle(self) -> bool:
        return self.fov >= 2.0 * math.pi - 1e-9

    def ray_angles(self) -> np.ndarray:
        """Ray angles in the sensor frame, counter-clockwise."""
        if self.full_circle:
            count = max(int(round(2.0 * math.pi / self.angular_resolution)), 1)
            return -math.pi + np.arange(count) * (2.0 * math.pi / count)
        count = max(int(math.floor(self.fov / self.angular_resolution + 1e-9)) + 1, 2)
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, count)

    def moved_to(self, x: float, y: float, theta: float) -> SensorNode2D:
        return SensorNode2D(x, y, theta, self.range, self.fov, self.angular_resolution)


@dataclass(frozen=True, eq=False)
class Scan:
    """Polar range readings in the sensor frame."""

    angles: np.ndarray
    ranges: np.ndarray
    max_range: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.angles) == len(self.ranges) == len(self.max_range)):
            raise ArgumentError("Scan arrays must have the same length")

    def __len__(self) -> int:
        return len(self.ranges)

    def points(self) -> np.ndarray:
        """Hit points in the sensor frame."""
        return self.ranges[:, None] * np.column_stack([np.cos(self.angles), np.sin(self.angles)])

    @property
    def min_range(self) -> float:
        return float(np.min(self.ranges)) if len(self.ranges) else math.inf


@dataclass(frozen=True)
class DepthCamera3D:
    """Pinhole depth camera producing z-depth images along its optical axis.

    The camera frame is x forward, y left, z up; yaw and pitch rotate it into
    the world frame.
    """

    position: tuple[float, float, float]
    yaw: float = 0.0
    pitch: float = 0.0
    fov_h: float = TOF_FOV
    fov_v: float = TOF_FOV
    width: int = TOF_RESOLUTION
    height: int = TOF_RESOLUTION
    min_range: float = TOF_MIN_RANGE
    max_range: float = TOF_MAX_RANGE

    def __post_init__(self) -> None:
        if not (0 < self.fov_h < math.pi and 0 < self.fov_v < math.pi):
            raise ArgumentError("Camera field of view must be in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ArgumentError("Camera resolution must be positive")
        if not 0 <= self.min_range < self.max_range:
            raise ArgumentError("Camera working range must satisfy 0 <= min < max")

    @cached_property
    def rotation(self) -> np.ndarray:
        # Negative pitch about y tilts the optical axis upward
        return Rotation.from_euler("ZY", [self.yaw, -self.pitch]).as_matrix()

    @property
    def focal(self) -> tuple[float, float]:
        fx = (self.width / 2.0) / math.tan(self.fov_h / 2.0)
        fy = (self.height / 2.0) / math.tan(self.fov_v / 2.0)
        return fx, fy

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame ray directions scaled to unit forward component, shape (H, W, 3)."""
        fx, fy = self.focal
        cols = np.arange(self.width) + 0.5 - self.width / 2.0
        rows = np.arange(self.height) + 0.5 - self.height / 2.0
        cc, rr = np.meshgrid(cols, rows)
        return np.stack([np.ones_like(cc), -cc / fx, -rr / fy], axis=-1)


@dataclass(frozen=True)
class ShrinkParams:
    """Time-window parameters for the temporarily safe area."""

    delta: float
    v_max: float
    horizon: int
    safety_margin: float
    robot_radius: float = 0.0

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ArgumentError(f"Sampling interval must be positive, got {self.delta}")
        if self.v_max < 0:
            raise ArgumentError(f"Obstacle speed bound must be non-negative, got {self.v_max}")
        if self.horizon < 1:
            raise ArgumentError(f"Time window must be at least 1 step, got {self.horizon}")
        if self.safety_margin < 0 or self.robot_radius < 0:
            raise ArgumentError("Safety margin and robot radius must be non-negative")

    def reduction(self, k: int) -> float:
        """Extra margin for step k: min(k, T) * delta * V_max."""
        return min(max(k, 0), self.horizon) * self.delta * self.v_max

    def threshold(self, k: int) -> float:
        return self.safety_margin + self.reduction(k)

    def thresholds(self, steps: np.ndarray) -> np.ndarray:
        return self.safety_margin + np.minimum(np.maximum(steps, 0), self.horizon) * self.delta * self.v_max
