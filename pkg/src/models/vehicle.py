"""Vehicle state and parameter types."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.shared.exceptions import ArgumentError


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.atan2(math.sin(theta), math.cos(theta))
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class UnicycleState:
    """Planar pose of a constant-speed unicycle."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ArgumentError(f"Pose must be finite, got ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def heading(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def normal(self) -> np.ndarray:
        """Unit vector to the left of the heading."""
        return np.array([-math.sin(self.theta), math.cos(self.theta)])


@dataclass(frozen=True)
class UnicycleParams:
    """Speed and turn-rate bound of a unicycle."""

    v: float
    u_max: float

    def __post_init__(self) -> None:
        if not self.v > 0:
            raise ArgumentError(f"Speed must be positive, got {self.v}")
        if not self.u_max > 0:
            raise ArgumentError(f"Turn-rate bound must be positive, got {self.u_max}")


@dataclass(frozen=True, eq=False)
class Vehicle3State:
    """Position and unit velocity direction of a constant-speed flying robot."""

    s: np.ndarray
    i: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=float)
        i = np.asarray(self.i, dtype=float)
        if s.shape != (3,) or i.shape != (3,):
            raise ArgumentError("Vehicle3State expects 3-vectors")
        norm = float(np.linalg.norm(i))
        if norm == 0.0:
            raise ArgumentError("Direction vector must be non-zero")
        if abs(norm - 1.0) > 1e-9:
            i = i / norm
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "i", i)


@dataclass(frozen=True, eq=False)
class InitialTorus:
    """Torus swept by all minimum-radius turning circles tangent to the heading.

    The base circle B is centred on the robot, lies in the plane whose normal
    is the heading, and has radius R_min; the tube radius equals R_min.
    """

    center: np.ndarray
    normal: np.ndarray
    radius: float

    @property
    def tube_radius(self) -> float:
        return self.radius

    def nearest_on_base(self, points: np.ndarray) -> np.ndarray:
        """Nearest point on the base circle for each query point."""
        points = np.atleast_2d(points)
        rel = points - self.center
        in_plane = rel - np.outer(rel @ self.normal, self.normal)
        norms = np.linalg.norm(in_plane, axis=1)
        fallback = _any_perpendicular(self.normal)
        safe = np.where(norms[:, None] > 1e-12, in_plane / np.maximum(norms, 1e-12)[:, None], fallback)
        return self.center + self.radius * safe


def _any_perpendicular(v: np.ndarray) -> np.ndarray:
    axis = np.eye(3)[int(np.argmin(np.abs(v)))]
    perp = np.cross(v, axis)
    return perp / np.linalg.norm(perp)
