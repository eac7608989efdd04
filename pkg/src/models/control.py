"""Controller gains and exploration state types."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from src.shared.constants import DEFAULT_PAUSE_PER_SAMPLE
from src.shared.exceptions import ArgumentError


@dataclass(frozen=True)
class Gains2D:
    """Sliding-mode gains: lam scales the saturation, sigma is its knee."""

    lam: float
    sigma: float

    def __post_init__(self) -> None:
        if not (self.lam > 0 and self.sigma > 0):
            raise ArgumentError("lambda and sigma must be positive")


@dataclass(frozen=True)
class Gains3D:
    lam_d: float = 2.0
    sigma_d: float = 1.0
    lam_a: float = 3.0
    sigma_a: float = 1.0
    w_d: float = 1.0
    w_a: float = 1.0

    def __post_init__(self) -> None:
        if min(self.lam_d, self.sigma_d, self.lam_a, self.sigma_a, self.w_d, self.w_a) <= 0:
            raise ArgumentError("All 3D tracking gains must be positive")


class OdometryModel(enum.Enum):
    PERFECT = "perfect"
    DEAD_RECKONING = "dead_reckoning"
    IMPROVED = "improved"


@dataclass(frozen=True)
class ExplorerConfig:
    """Parameters of randomized safe exploration."""

    d0: float
    q0: float
    theta_trig: float
    d_trig: float
    v: float
    u_max: float
    sample_time: float
    seed: int = 0
    pause: float | None = None
    lam: float = 1.0
    sigma: float = 1.0
    smooth: bool = False
    smooth_slope: float | None = None
    noise_sigma: float = 0.0
    odometry: OdometryModel = OdometryModel.PERFECT
    odometry_noise: float = 0.0

    def __post_init__(self) -> None:
        if not self.d0 > 0:
            raise ArgumentError(f"Safety margin d0 must be positive, got {self.d0}")
        if not 0 < self.q0 < 1:
            raise ArgumentError(f"Branch probability must be in (0, 1), got {self.q0}")
        if not (self.theta_trig > 0 and self.d_trig > 0 and self.sample_time > 0):
            raise ArgumentError("Trigger thresholds and sample time must be positive")
        if not (self.v > 0 and self.u_max > 0):
            raise ArgumentError("Speed and turn-rate bound must be positive")
        if not self.v / self.u_max < self.d0:
            raise ArgumentError(
                f"Minimum turning radius {self.v / self.u_max:.3f} must be below d0={self.d0}"
            )

    @property
    def r_min(self) -> float:
        return self.v / self.u_max

    @property
    def pause_time(self) -> float:
        return self.pause if self.pause is not None else DEFAULT_PAUSE_PER_SAMPLE * self.sample_time

    @property
    def gains(self) -> Gains2D:
        return Gains2D(self.lam, self.sigma)


class ExplorerMode(enum.Enum):
    R1 = "R1"  # initial circle
    R2 = "R2"  # pursuit of a tangent segment
    R3 = "R3"  # boundary following


@dataclass(frozen=True, eq=False)
class TangentSegment:
    """Tangent segment from the robot (pole) to an offset endpoint, robot frame."""

    start: np.ndarray
    end: np.ndarray
    side: int
    source_index: int = -1

    def __post_init__(self) -> None:
        if not np.linalg.norm(self.end - self.start) > 0:
            raise ArgumentError("Tangent segment must have positive length")

    @property
    def angle(self) -> float:
        d = self.end - self.start
        return math.atan2(float(d[1]), float(d[0]))


@dataclass(frozen=True, eq=False)
class ExplorerState:
    mode: ExplorerMode
    target: np.ndarray | None = None
    pause_until: float = -math.inf
    gamma: int = 1
    r1_sign: int = 1
    prev_d_min: float | None = None
    time: float = 0.0

    def __post_init__(self) -> None:
        if (self.mode is ExplorerMode.R2) != (self.target is not None):
            raise ArgumentError("Intermediate target is defined iff mode is R2")
