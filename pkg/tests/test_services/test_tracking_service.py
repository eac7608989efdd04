"""Tests for sliding-mode path tracking."""

import numpy as np
import pytest

from src.models.control import Gains2D, Gains3D
from src.models.planning import PathPolyline
from src.models.vehicle import UnicycleParams, UnicycleState, Vehicle3State
from src.services.tracking_service import closest_on_polyline, tracking_service
from src.shared.exceptions import ArgumentError

PARAMS = UnicycleParams(v=0.5, u_max=2.0)
GAINS = Gains2D(lam=1.0, sigma=0.5)


def _line(dim: int = 2) -> PathPolyline:
    xs = np.linspace(0.0, 20.0, 41)
    points = np.zeros((len(xs), dim))
    points[:, 0] = xs
    return PathPolyline(points, 0.5)


def test_saturation_is_linear_inside_the_knee():
    assert tracking_service.saturation_X(0.2, 2.0, 0.5) == pytest.approx(0.4)
    assert tracking_service.saturation_X(3.0, 2.0, 0.5) == pytest.approx(1.0)
    assert tracking_service.saturation_X(-3.0, 2.0, 0.5) == pytest.approx(-1.0)


def test_smc2d_switches_on_the_sliding_variable():
    assert tracking_service.smc2d(0.3, 0.0, GAINS, 2.0) == 2.0
    assert tracking_service.smc2d(0.3, -1.0, GAINS, 2.0) == -2.0
    assert tracking_service.smc2d(0.0, 0.0, GAINS, 2.0) == 0.0


def test_smooth_switch_is_bounded_slope():
    assert tracking_service.smc2d(0.01, 0.0, GAINS, 2.0, smooth_slope=10.0) == pytest.approx(0.2)
    assert tracking_service.smc2d(1.0, 0.0, GAINS, 2.0, smooth_slope=10.0) == pytest.approx(2.0)


def test_closest_point_on_polyline():
    closest = closest_on_polyline(np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]]), np.array([3.0, 1.5]))
    assert closest.index == 1
    assert closest.point == pytest.approx([2.0, 1.5])
    assert closest.tangent == pytest.approx([0.0, 1.0])
    assert closest.distance == pytest.approx(1.0)


def test_cross_track_is_positive_when_path_is_left():
    e, _ = tracking_service.signed_cross_track(UnicycleState(1.0, -1.0, 0.0), _line())
    assert e == pytest.approx(1.0)
    e, _ = tracking_service.signed_cross_track(UnicycleState(1.0, 1.0, 0.0), _line())
    assert e == pytest.approx(-1.0)


def test_cross_track_rejects_empty_path():
    with pytest.raises(ArgumentError):
        tracking_service.signed_cross_track(UnicycleState(0.0, 0.0, 0.0), np.zeros((0, 2)))


def test_track_step_converges_onto_a_straight_path():
    state = UnicycleState(0.0, 0.5, 0.0)
    prev = None
    for _ in range(20):
        result = tracking_service.track_step(state, PARAMS, _line(), GAINS, 0.5, substeps=50, prev_error=prev)
        state, prev = result.state, result.error
    assert abs(state.y) < 0.05
    assert state.x > 3.0


def test_zero_interval_leaves_state_unchanged():
    state = UnicycleState(0.0, 0.5, 0.0)
    result = tracking_service.track_step(state, PARAMS, _line(), GAINS, 0.0)
    assert result.state == state
    assert result.states == []
    with pytest.raises(ArgumentError):
        tracking_service.track_step(state, PARAMS, _line(), GAINS, -0.1)


def test_errors3d_vanish_on_the_path():
    state = Vehicle3State(np.array([2.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    errors, _, _ = tracking_service.errors3d(state, _line(3))
    assert errors.distance == pytest.approx(0.0)
    assert errors.angle == pytest.approx(0.0, abs=1e-9)


def test_track_step_3d_approaches_the_path():
    state = Vehicle3State(np.array([0.0, 0.5, 0.0]), np.array([1.0, 0.0, 0.0]))
    prev = None
    start, _, _ = tracking_service.errors3d(state, _line(3))
    for _ in range(20):
        result = tracking_service.track_step_3d(state, 0.5, _line(3), Gains3D(), 2.0, 0.5, substeps=50, prev=prev)
        state, prev = result.state, result.error
    end, _, _ = tracking_service.errors3d(state, _line(3))
    assert end.distance < start.distance
    assert end.distance < 0.15


def test_smc3d_is_silent_on_the_path():
    state = Vehicle3State(np.array([5.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    u, errors = tracking_service.smc3d(state, _line(3), Gains3D(), 2.0)
    assert np.array_equal(u, np.zeros(3))
    assert errors.distance == pytest.approx(0.0)


def test_smc3d_steers_back_toward_the_path():
    state = Vehicle3State(np.array([5.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    u, _ = tracking_service.smc3d(state, _line(3), Gains3D(), 2.0)
    assert u == pytest.approx([0.0, -2.0, 0.0])


def test_smc3d_control_is_normal_to_heading_with_full_magnitude():
    rng = np.random.default_rng(11)
    t = np.linspace(0.0, 4.0 * np.pi, 80)
    helix = PathPolyline(np.column_stack([2.0 * np.cos(t), 2.0 * np.sin(t), 0.3 * t]), 0.3)
    u_max = 1.5
    for _ in range(500):
        s = helix.points[rng.integers(len(helix))] + rng.normal(scale=0.8, size=3)
        state = Vehicle3State(s, rng.normal(size=3))
        prev, dt = None, None
        if rng.random() < 0.5:
            prev, _, _ = tracking_service.errors3d(Vehicle3State(s + rng.normal(scale=0.05, size=3), state.i), helix)
            dt = 0.01
        u, _ = tracking_service.smc3d(state, helix, Gains3D(), u_max, prev, dt)
        assert abs(float(u @ state.i)) < 1e-9
        norm = float(np.linalg.norm(u))
        assert norm == 0.0 or norm == pytest.approx(u_max, abs=1e-9)
