"""Tests for tangent detection, the exploration control law, odometry and map-building runs."""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.models.control import ExplorerConfig, ExplorerMode, ExplorerState
from src.models.geometry import PolyObstacle, World2D
from src.models.sensing import Scan, SensorNode2D
from src.models.vehicle import UnicycleState
from src.services.exploration_service import OdometryReading, exploration_service
from src.shared.exceptions import ArgumentError

CFG = ExplorerConfig(d0=0.3, q0=0.5, theta_trig=0.35, d_trig=0.2, v=0.3, u_max=1.5, sample_time=0.1)


def _edge_scan() -> Scan:
    """Near wall on the right, open space on the left."""
    angles = np.array([-0.2, -0.1, 0.0, 0.1, 0.2])
    ranges = np.array([1.0, 1.0, 1.0, 5.0, 5.0])
    return Scan(angles, ranges, np.zeros(5, dtype=bool))


def _flat_scan() -> Scan:
    angles = np.linspace(-math.pi, math.pi, 36, endpoint=False)
    return Scan(angles, np.full(36, 1.0), np.zeros(36, dtype=bool))


def test_range_jump_yields_a_tangent_segment():
    segments = exploration_service.detect_tangents_from_scan(_edge_scan(), 0.3)
    assert len(segments) == 1
    segment = segments[0]
    assert segment.side == 1
    assert segment.end == pytest.approx([1.0, 0.3])
    assert segment.angle == pytest.approx(math.atan2(0.3, 1.0))


def test_smooth_scan_has_no_tangents():
    assert exploration_service.detect_tangents_from_scan(_flat_scan(), 0.3) == []
    with pytest.raises(ArgumentError):
        exploration_service.detect_tangents_from_scan(_flat_scan(), 0.0)


def test_coinciding_tangent_respects_the_trigger_angle():
    segments = exploration_service.detect_tangents_from_scan(_edge_scan(), 0.3)
    assert exploration_service.coinciding_tangent(segments, 0.35) is segments[0]
    assert exploration_service.coinciding_tangent(segments, 0.2) is None


def test_initial_circle_side_follows_seed_parity():
    assert exploration_service.initial_state(CFG).r1_sign == 1
    odd = replace(CFG, seed=3)
    assert exploration_service.initial_state(odd).r1_sign == -1


def test_r1_turns_at_full_rate_without_tangent():
    pose = UnicycleState(1.0, 1.0, 0.0)
    state = exploration_service.initial_state(CFG)
    decision = exploration_service.explorer_control(pose, _flat_scan(), state, CFG, np.random.default_rng(0))
    assert decision.u == CFG.u_max
    assert decision.state.mode is ExplorerMode.R1
    assert decision.state.time == pytest.approx(CFG.sample_time)


def test_r1_switches_to_pursuit_of_aligned_tangent():
    pose = UnicycleState(1.0, 1.0, 0.0)
    state = exploration_service.initial_state(CFG)
    decision = exploration_service.explorer_control(pose, _edge_scan(), state, CFG, np.random.default_rng(0))
    assert decision.state.mode is ExplorerMode.R2
    assert decision.state.target == pytest.approx([2.0, 1.3])
    assert decision.u == CFG.u_max


def test_r2_hands_over_to_boundary_following_near_the_target():
    pose = UnicycleState(1.0, 1.0, 0.0)
    state = ExplorerState(ExplorerMode.R2, np.array([1.1, 1.0]))
    decision = exploration_service.explorer_control(pose, _edge_scan(), state, CFG, np.random.default_rng(0))
    assert decision.state.mode is ExplorerMode.R3
    assert decision.state.gamma == -1


def test_r3_draw_decides_between_leaving_and_pausing():
    pose = UnicycleState(1.0, 1.0, 0.0)
    state = ExplorerState(ExplorerMode.R3, time=1.0)
    decision = exploration_service.explorer_control(pose, _edge_scan(), state, CFG, np.random.default_rng(7))
    assert decision.draw is not None
    if decision.draw < CFG.q0:
        assert decision.state.mode is ExplorerMode.R2
    else:
        assert decision.state.mode is ExplorerMode.R3
        assert decision.state.pause_until == pytest.approx(1.0 + CFG.pause_time)


def test_paused_r3_does_not_draw():
    pose = UnicycleState(1.0, 1.0, 0.0)
    state = ExplorerState(ExplorerMode.R3, pause_until=5.0, time=1.0)
    decision = exploration_service.explorer_control(pose, _edge_scan(), state, CFG, np.random.default_rng(7))
    assert decision.draw is None
    assert decision.state.mode is ExplorerMode.R3


def test_improved_odometry_matches_dead_reckoning_on_straight_lines():
    pose = UnicycleState(0.0, 0.0, 0.5)
    reading = OdometryReading(1.0, 0.0, 0.0)
    simple = exploration_service.dead_reckoning_step(pose, reading, 0.1)
    improved = exploration_service.improved_odometry_step(pose, reading, 0.1)
    assert improved.x == pytest.approx(simple.x)
    assert improved.y == pytest.approx(simple.y)


def test_improved_odometry_adds_lateral_drift():
    pose = UnicycleState(0.0, 0.0, 0.0)
    improved = exploration_service.improved_odometry_step(pose, OdometryReading(1.0, 0.5, 0.5), 0.1)
    assert improved.y == pytest.approx(0.0025)
    assert improved.x < 0.1
    assert improved.theta == pytest.approx(0.05)


def test_noise_free_odometry_reading_is_exact():
    reading = exploration_service.read_odometry(0.3, 1.0, 0.0, np.random.default_rng(0))
    assert reading == OdometryReading(0.3, 1.0, 0.3)


@pytest.mark.slow
def test_exploring_an_empty_room_completes():
    world = World2D((0.0, 0.0, 3.0, 3.0), (), cell_size=0.1)
    result = exploration_service.run_exploration(
        world, UnicycleState(1.5, 1.5, 0.0), CFG, SensorNode2D(0.0, 0.0, 0.0, 5.0), step_cap=200
    )
    assert result.completed
    assert result.steps == len(result.trajectory.rows)
    assert result.min_clearance > 0.0


@pytest.mark.slow
def test_exploration_is_reproducible_for_a_seed():
    block = PolyObstacle(((1.5, 1.5), (2.5, 1.5), (2.5, 2.5), (1.5, 2.5)))
    world = World2D((0.0, 0.0, 4.0, 4.0), (block,), cell_size=0.1)
    cfg = replace(CFG, seed=5, noise_sigma=0.01)
    runs = [
        exploration_service.run_exploration(
            world, UnicycleState(0.7, 0.7, 0.0), cfg, SensorNode2D(0.0, 0.0, 0.0, 4.0), step_cap=150
        )
        for _ in range(2)
    ]
    assert runs[0].clearance == runs[1].clearance
    assert runs[0].transitions == runs[1].transitions
