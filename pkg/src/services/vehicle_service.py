"""Kinematic integrators and turning geometry for planar and flying robots."""

import logging
import math

import numpy as np

from src.models.geometry import Circle2
from src.models.vehicle import InitialTorus, UnicycleParams, UnicycleState, Vehicle3State
from src.shared.constants import ORTHOGONALITY_TOLERANCE
from src.shared.exceptions import ArgumentError

logger = logging.getLogger(__name__)


class VehicleService:
    """Service for unicycle and 3D constant-speed vehicle motion."""

    @staticmethod
    def min_turn_radius(params: UnicycleParams) -> float:
        return params.v / params.u_max

    @staticmethod
    def step_unicycle(state: UnicycleState, params: UnicycleParams, u: float, dt: float) -> UnicycleState:
        """
        Advance a unicycle by an exact circular arc.

        Args:
            state: Current pose
            params: Speed and turn-rate bound
            u: Commanded turn rate, clamped to [-u_max, u_max]
            dt: Time step

        Returns:
            Pose after dt

        Raises:
            ArgumentError: dt is not positive
        """
        if not dt > 0:
            raise ArgumentError(f"Time step must be positive, got {dt}")
        if abs(u) > params.u_max:
            logger.debug(f"Turn rate {u:.4f} clamped to +/-{params.u_max:.4f}")
            u = math.copysign(params.u_max, u)

        v = params.v
        theta = state.theta
        if u == 0.0:
            return UnicycleState(state.x + v * dt * math.cos(theta), state.y + v * dt * math.sin(theta), theta)
        new_theta = theta + u * dt
        radius = v / u
        x = state.x + radius * (math.sin(new_theta) - math.sin(theta))
        y = state.y - radius * (math.cos(new_theta) - math.cos(theta))
        return UnicycleState(x, y, new_theta)

    @staticmethod
    def initial_circles(pose: UnicycleState, r_min: float) -> tuple[Circle2, Circle2]:
        """Left and right minimum-radius circles tangent to the heading at the robot."""
        if not r_min > 0:
            raise ArgumentError(f"Turning radius must be positive, got {r_min}")
        n = pose.normal
        left = (pose.x + r_min * float(n[0]), pose.y + r_min * float(n[1]))
        right = (pose.x - r_min * float(n[0]), pose.y - r_min * float(n[1]))
        return Circle2(left, r_min), Circle2(right, r_min)

    @staticmethod
    def project_control(state: Vehicle3State, u: np.ndarray, u_max: float | None = None) -> np.ndarray:
        """Remove the component of u along i (when beyond tolerance) and clamp its norm."""
        u = np.asarray(u, dtype=float)
        along = float(u @ state.i)
        if abs(along) > ORTHOGONALITY_TOLERANCE:
            logger.debug(f"Control not orthogonal to heading (dot={along:.2e}), re-orthogonalized")
            u = u - along * state.i
        norm = float(np.linalg.norm(u))
        if u_max is not None and norm > u_max:
            logger.debug(f"Control magnitude {norm:.4f} clamped to {u_max:.4f}")
            u = u * (u_max / norm)
        return u

    @staticmethod
    def step_vehicle3(
        state: Vehicle3State, v: float, u: np.ndarray, dt: float, u_max: float | None = None
    ) -> Vehicle3State:
        """
        Advance a 3D vehicle with s' = v i and i' = u.

        With u orthogonal to i the heading turns at rate |u| about i x u,
        so the step is integrated as an exact arc and i is renormalized.

        Raises:
            ArgumentError: dt is not positive
        """
        if not dt > 0:
            raise ArgumentError(f"Time step must be positive, got {dt}")
        u = VehicleService.project_control(state, u, u_max)
        rate = float(np.linalg.norm(u))
        i = state.i
        if rate < 1e-15:
            return Vehicle3State(state.s + v * dt * i, i)
        bend = u / rate
        phi = rate * dt
        s = state.s + v * ((math.sin(phi) / rate) * i + ((1.0 - math.cos(phi)) / rate) * bend)
        new_i = math.cos(phi) * i + math.sin(phi) * bend
        return Vehicle3State(s, new_i / np.linalg.norm(new_i))

    @staticmethod
    def initial_torus(state: Vehicle3State, r_min: float) -> InitialTorus:
        if not r_min > 0:
            raise ArgumentError(f"Turning radius must be positive, got {r_min}")
        return InitialTorus(state.s.copy(), state.i.copy(), r_min)


# Global service instance
vehicle_service = VehicleService()
