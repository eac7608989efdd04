"""Tests for region grids, set operations and world assumption checks."""

import numpy as np
import pytest

from src.models.geometry import AssumptionContext, DiskObstacle, PolyObstacle, World2D
from src.services.geometry_service import geometry_service
from src.shared.constants import CELL_FREE, CELL_OCCUPIED
from src.shared.exceptions import ArgumentError

SQUARE = PolyObstacle(((1.0, 1.0), (3.0, 1.0), (3.0, 3.0), (1.0, 3.0)))


def _square_world() -> World2D:
    return World2D((0.0, 0.0, 4.0, 4.0), (SQUARE,), cell_size=0.5)


def test_rasterize_marks_cells_with_centres_inside():
    """Cells whose centres lie inside the square are occupied."""
    grid = geometry_service.rasterize(_square_world())
    assert grid.shape == (8, 8)
    assert np.count_nonzero(grid.labels == CELL_OCCUPIED) == 16
    assert grid.labels[3, 3] == CELL_OCCUPIED
    assert grid.labels[0, 0] == CELL_FREE


def test_query_measures_distance_to_world_boundary():
    """The grid edge acts as a wall."""
    world = World2D((0.0, 0.0, 4.0, 4.0), (), cell_size=0.5)
    grid = geometry_service.rasterize(world)
    result = grid.query(np.array([[1.25, 2.25]]))
    assert result.distance[0] == pytest.approx(1.25)
    assert not result.inside[0]


def test_query_reports_points_inside_obstacles():
    grid = geometry_service.rasterize(_square_world())
    result = grid.query(np.array([[2.0, 2.0]]))
    assert result.inside[0]
    assert result.distance[0] == 0.0


def test_reduce_drops_free_cells_near_the_boundary():
    world = World2D((0.0, 0.0, 4.0, 4.0), (), cell_size=0.5)
    reduced = geometry_service.reduce(geometry_service.rasterize(world), 0.6)
    assert np.count_nonzero(reduced.labels == CELL_FREE) == 36
    assert reduced.labels[0, 4] == CELL_OCCUPIED
    assert reduced.labels[1, 4] == CELL_FREE


def test_enlarge_grows_obstacles_and_zero_is_identity():
    grid = geometry_service.rasterize(_square_world())
    before = np.count_nonzero(grid.labels == CELL_OCCUPIED)
    assert np.array_equal(geometry_service.enlarge(grid, 0.0).labels, grid.labels)
    assert np.count_nonzero(geometry_service.enlarge(grid, 0.5).labels == CELL_OCCUPIED) > before


def test_negative_distances_are_rejected():
    grid = geometry_service.rasterize(_square_world())
    with pytest.raises(ArgumentError):
        geometry_service.reduce(grid, -0.1)
    with pytest.raises(ArgumentError):
        geometry_service.enlarge(grid, -0.1)


def test_segment_clear_detects_blocked_segments():
    grid = geometry_service.rasterize(_square_world())
    assert not geometry_service.segment_clear(grid, np.array([0.25, 2.0]), np.array([3.75, 2.0]))
    assert geometry_service.segment_clear(grid, np.array([0.25, 0.4]), np.array([3.75, 0.4]))


def test_world_clearance_takes_nearest_of_walls_and_obstacles():
    world = World2D((0.0, 0.0, 10.0, 10.0), (DiskObstacle((5.0, 5.0), 1.0),))
    clearance = geometry_service.world_clearance(world, np.array([[5.0, 2.5], [0.5, 5.0]]))
    assert clearance == pytest.approx([1.5, 0.5])


def test_resample_polyline_spacing():
    points = geometry_service.resample_polyline(np.array([[0.0, 0.0], [1.0, 0.0]]), 0.25)
    assert len(points) == 5
    assert np.allclose(np.diff(points[:, 0]), 0.25)


def test_self_intersecting_polygon_is_rejected():
    with pytest.raises(ArgumentError):
        PolyObstacle(((0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)))


def test_validate_scenario_accepts_compliant_world():
    world = World2D((0.0, 0.0, 10.0, 10.0), (DiskObstacle((5.0, 5.0), 1.0),))
    context = AssumptionContext(
        safety_margin=0.3, r_min=0.2, speed=0.5, poses=((1.5, 1.5, 0.0),), targets=((8.5, 8.5),)
    )
    assert geometry_service.validate_scenario(world, context) == []


def test_validate_scenario_flags_target_inside_obstacle():
    world = World2D((0.0, 0.0, 10.0, 10.0), (DiskObstacle((5.0, 5.0), 1.0),))
    context = AssumptionContext(
        safety_margin=0.3, r_min=0.2, speed=0.5, poses=((1.5, 1.5, 0.0),), targets=((5.0, 5.0),)
    )
    codes = {v.code for v in geometry_service.validate_scenario(world, context)}
    assert "target_unsafe" in codes


def test_validate_scenario_flags_overlapping_enlargements():
    world = World2D(
        (0.0, 0.0, 10.0, 10.0),
        (DiskObstacle((4.0, 5.0), 1.0), DiskObstacle((6.4, 5.0), 1.0)),
    )
    context = AssumptionContext(safety_margin=0.5, r_min=0.2, speed=0.5, poses=((1.5, 1.5, 0.0),))
    codes = {v.code for v in geometry_service.validate_scenario(world, context)}
    assert "enlargements_overlap" in codes


def test_validate_scenario_flags_fast_obstacles():
    world = World2D((0.0, 0.0, 10.0, 10.0), (DiskObstacle((5.0, 5.0), 1.0, (1.0, 0.0)),))
    context = AssumptionContext(safety_margin=0.3, r_min=0.2, speed=0.5, poses=((1.5, 1.5, 0.0),))
    codes = {v.code for v in geometry_service.validate_scenario(world, context)}
    assert "obstacle_too_fast" in codes


def _unit_box_grid():
    box = PolyObstacle(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))
    return geometry_service.rasterize(World2D((-3.0, -3.0, 5.0, 4.0), (box,), cell_size=0.05))


def test_distance_to_set_matches_the_box_distance():
    grid = _unit_box_grid()
    outside = geometry_service.distance_to_set(grid, np.array([2.0, 0.5]))
    assert outside.distance == pytest.approx(1.0, abs=grid.cell_size)
    assert not outside.out_of_bounds
    assert geometry_service.distance_to_set(grid, np.array([0.5, 0.5])).distance == 0.0
    on_edge = geometry_service.distance_to_set(grid, np.array([1.0, 0.5]))
    assert on_edge.distance == pytest.approx(0.0, abs=grid.cell_size)


def test_distance_to_set_flags_points_off_the_grid():
    result = geometry_service.distance_to_set(_unit_box_grid(), np.array([10.0, 10.0]))
    assert result.distance == 0.0
    assert result.out_of_bounds


def test_distance_to_set_is_one_lipschitz():
    grid = _unit_box_grid()
    rng = np.random.default_rng(5)
    lower, upper = grid.origin, grid.upper
    for _ in range(1000):
        p = rng.uniform(lower, upper)
        q = p + rng.normal(scale=0.5, size=2)
        q = np.clip(q, lower, upper - 1e-9)
        rho_p = geometry_service.distance_to_set(grid, p).distance
        rho_q = geometry_service.distance_to_set(grid, q).distance
        assert abs(rho_p - rho_q) <= np.linalg.norm(p - q) + 2 * grid.cell_size
