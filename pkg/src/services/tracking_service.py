"""Sliding-mode path tracking for planar unicycles and 3D flying robots."""

import logging
import math
from typing import NamedTuple

import numpy as np

from src.config import config
from src.models.control import Gains2D, Gains3D
from src.models.planning import PathPolyline
from src.models.vehicle import UnicycleParams, UnicycleState, Vehicle3State
from src.services.vehicle_service import vehicle_service
from src.shared.exceptions import ArgumentError

logger = logging.getLogger(__name__)


class ClosestPoint(NamedTuple):
    point: np.ndarray
    index: int
    tangent: np.ndarray
    distance: float


class Errors3D(NamedTuple):
    distance: float
    angle: float
    degenerate: bool = False


class TrackResult(NamedTuple):
    """State after one sampling interval plus every substep state (first excluded)."""

    state: UnicycleState | Vehicle3State
    error: float | Errors3D | None
    states: list


def closest_on_polyline(points: np.ndarray, p: np.ndarray) -> ClosestPoint:
    """Closest point of a polyline to p, with the segment index and unit tangent there."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    p = np.asarray(p, dtype=float)
    if len(points) == 1:
        rel = points[0] - p
        dist = float(np.linalg.norm(rel))
        tangent = rel / dist if dist > 1e-12 else np.eye(len(p))[0]
        return ClosestPoint(points[0].copy(), 0, tangent, dist)

    a, b = points[:-1], points[1:]
    ab = b - a
    sq = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(sq > 0, np.einsum("ij,ij->i", p - a, ab) / sq, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    dists = np.linalg.norm(proj - p, axis=1)
    k = int(np.argmin(dists))
    length = math.sqrt(sq[k])
    tangent = ab[k] / length if length > 0 else np.eye(len(p))[0]
    return ClosestPoint(proj[k], k, tangent, float(dists[k]))


class TrackingService:
    """Service for sliding-mode tracking controllers."""

    # ------------------------------------------------------------------
    # Scalar laws
    # ------------------------------------------------------------------

    @staticmethod
    def sgn(x: float) -> int:
        if x > 0:
            return 1
        if x < 0:
            return -1
        return 0

    @staticmethod
    def soft_sign(x: float, slope: float) -> float:
        """Bounded-slope replacement of sgn: slope * x clipped to [-1, 1]."""
        return max(-1.0, min(1.0, slope * x))

    @staticmethod
    def switch(x: float, smooth_slope: float | None = None) -> float:
        if smooth_slope is None:
            return float(TrackingService.sgn(x))
        return TrackingService.soft_sign(x, smooth_slope)

    @staticmethod
    def saturation_X(z: float, lam: float, sigma: float) -> float:
        """lam * z inside [-sigma, sigma], lam * sigma * sgn(z) outside."""
        if abs(z) <= sigma:
            return lam * z
        return lam * sigma * TrackingService.sgn(z)

    @staticmethod
    def smc2d(
        e: float, e_dot: float, gains: Gains2D, u_max: float, smooth_slope: float | None = None
    ) -> float:
        """Planar sliding-mode law u = u_max * sgn(e_dot + X(e))."""
        s = e_dot + TrackingService.saturation_X(e, gains.lam, gains.sigma)
        return u_max * TrackingService.switch(s, smooth_slope)

    @staticmethod
    def boundary_following(
        d_min: float,
        d_dot: float,
        d0: float,
        gamma: int,
        gains: Gains2D,
        u_max: float,
        smooth_slope: float | None = None,
    ) -> float:
        """Boundary-following form: Gamma * u_max * sgn(d_dot + X(d_min - d0))."""
        return gamma * TrackingService.smc2d(d_min - d0, d_dot, gains, u_max, smooth_slope)

    # ------------------------------------------------------------------
    # Planar tracking
    # ------------------------------------------------------------------

    @staticmethod
    def signed_cross_track(pose: UnicycleState, path: PathPolyline | np.ndarray) -> tuple[float, int]:
        """
        Minimum distance to the path, positive when the closest point lies to the robot's left.

        Returns:
            Tuple of (signed distance, index of the closest segment)
        """
        points = path.points if isinstance(path, PathPolyline) else np.asarray(path, dtype=float)
        if len(points) == 0:
            raise ArgumentError("Cannot track an empty path")
        closest = closest_on_polyline(points, pose.position)
        lateral = float((closest.point - pose.position) @ pose.normal)
        if lateral == 0.0:
            return closest.distance, closest.index
        return math.copysign(closest.distance, lateral), closest.index

    @staticmethod
    def track_step(
        state: UnicycleState,
        params: UnicycleParams,
        path: PathPolyline,
        gains: Gains2D,
        delta: float,
        substeps: int | None = None,
        prev_error: float | None = None,
        smooth_slope: float | None = None,
    ) -> TrackResult:
        """
        Track a planar path for one sampling interval.

        The control is recomputed every substep (delta / substeps) with the
        error rate taken as a backward difference.

        Args:
            state: Current pose
            params: Speed and turn-rate bound
            path: Path held fixed over the interval
            gains: Sliding-mode gains
            delta: Sampling interval (0 leaves the state unchanged)
            substeps: Actuation substeps per interval
            prev_error: Error at the previous substep, if any
            smooth_slope: Use the bounded-slope switch instead of sgn
        """
        if delta < 0:
            raise ArgumentError(f"Sampling interval must be non-negative, got {delta}")
        if delta == 0:
            return TrackResult(state, prev_error, [])
        n = substeps or config.tracking_substeps
        dt = delta / n
        states: list[UnicycleState] = []
        for _ in range(n):
            e, _ = TrackingService.signed_cross_track(state, path)
            e_dot = 0.0 if prev_error is None else (e - prev_error) / dt
            u = TrackingService.smc2d(e, e_dot, gains, params.u_max, smooth_slope)
            state = vehicle_service.step_unicycle(state, params, u, dt)
            states.append(state)
            prev_error = e
        return TrackResult(state, prev_error, states)

    # ------------------------------------------------------------------
    # 3D tracking
    # ------------------------------------------------------------------

    @staticmethod
    def errors3d(state: Vehicle3State, path: PathPolyline) -> tuple[Errors3D, np.ndarray, np.ndarray]:
        """Distance and orientation errors with the unit vectors nu_d and nu_a."""
        closest = closest_on_polyline(path.points, state.s)
        offset = closest.point - state.s
        degenerate = False
        if closest.distance > 1e-9:
            nu_d = offset / closest.distance
            normal = np.cross(closest.tangent, nu_d)
        else:
            nu_d = np.zeros(3)
            normal = np.cross(closest.tangent, state.i)
        norm = float(np.linalg.norm(normal))
        if norm < 1e-9:
            # Fall back to any normal of the tangent line
            degenerate = True
            axis = np.eye(3)[int(np.argmin(np.abs(closest.tangent)))]
            normal = np.cross(closest.tangent, axis)
            norm = float(np.linalg.norm(normal))
            logger.debug("Tracking plane degenerate, using a tangent normal")
        nu_a = normal / norm
        e_a = math.acos(max(-1.0, min(1.0, float(state.i @ nu_a)))) - math.pi / 2.0
        return Errors3D(closest.distance, e_a, degenerate), nu_d, nu_a

    @staticmethod
    def smc3d(
        state: Vehicle3State,
        path: PathPolyline,
        gains: Gains3D,
        u_max: float,
        prev: Errors3D | None = None,
        dt: float | None = None,
        smooth_slope: float | None = None,
    ) -> tuple[np.ndarray, Errors3D]:
        """
        Two-error sliding-mode law for a 3D path.

        u_s = w_d u_d nu_d + w_a u_a nu_a is projected onto the plane normal
        to i by i x u_s x i and scaled to U_M; a zero u_s gives zero control.

        Returns:
            Tuple of (control vector, current errors)
        """
        errors, nu_d, nu_a = TrackingService.errors3d(state, path)
        if prev is not None and dt:
            ed_dot = (errors.distance - prev.distance) / dt
            ea_dot = (errors.angle - prev.angle) / dt
        else:
            ed_dot = ea_dot = 0.0
        u_d = TrackingService.switch(
            ed_dot + TrackingService.saturation_X(errors.distance, gains.lam_d, gains.sigma_d), smooth_slope
        )
        u_a = TrackingService.switch(
            ea_dot + TrackingService.saturation_X(errors.angle, gains.lam_a, gains.sigma_a), smooth_slope
        )
        u_s = gains.w_d * u_d * nu_d + gains.w_a * u_a * nu_a
        norm_s = float(np.linalg.norm(u_s))
        if norm_s < 1e-12:
            return np.zeros(3), errors

        i = state.i
        projected = np.cross(np.cross(i, u_s / norm_s), i)
        norm_p = float(np.linalg.norm(projected))
        if norm_p < 1e-12:
            return np.zeros(3), errors
        if smooth_slope is None:
            return u_max * projected / norm_p, errors
        scale = min(1.0, norm_s / (gains.w_d + gains.w_a))
        return u_max * scale * projected / norm_p, errors

    @staticmethod
    def track_step_3d(
        state: Vehicle3State,
        speed: float,
        path: PathPolyline,
        gains: Gains3D,
        u_max: float,
        delta: float,
        substeps: int | None = None,
        prev: Errors3D | None = None,
        smooth_slope: float | None = None,
    ) -> TrackResult:
        """Track a 3D path for one sampling interval."""
        if delta < 0:
            raise ArgumentError(f"Sampling interval must be non-negative, got {delta}")
        if delta == 0:
            return TrackResult(state, prev, [])
        n = substeps or config.tracking_substeps
        dt = delta / n
        states: list[Vehicle3State] = []
        for _ in range(n):
            u, prev = TrackingService.smc3d(state, path, gains, u_max, prev, dt, smooth_slope)
            state = vehicle_service.step_vehicle3(state, speed, u, dt, u_max)
            states.append(state)
        return TrackResult(state, prev, states)


# Global service instance
tracking_service = TrackingService()
