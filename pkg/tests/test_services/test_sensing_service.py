"""Tests for simulated range sensing, free-space fusion and map building."""

import math

import numpy as np
import pytest

from src.models.geometry import BoxObstacle3, DiskObstacle, PolyObstacle, World2D, World3D
from src.models.sensing import DepthCamera3D, SensorNode2D, ShrinkParams
from src.services.geometry_service import geometry_service
from src.services.sensing_service import sensing_service
from src.shared.constants import CELL_FREE, CELL_OCCUPIED, CELL_UNKNOWN
from src.shared.exceptions import ArgumentError


def _room(size: float = 4.0, cell: float = 0.1):
    return geometry_service.rasterize(World2D((0.0, 0.0, size, size), (), cell_size=cell))


def test_scan_hits_the_walls():
    truth = _room()
    scan = sensing_service.raycast_scan(truth, SensorNode2D(2.0, 2.0, 0.0, 10.0))
    ahead = int(np.argmin(np.abs(scan.angles)))
    assert not scan.max_range[ahead]
    assert scan.ranges[ahead] == pytest.approx(2.0, abs=0.03)
    assert not scan.max_range.any()


def test_scan_reports_max_range_without_hits():
    scan = sensing_service.raycast_scan(_room(), SensorNode2D(2.0, 2.0, 0.0, 1.0))
    assert scan.max_range.all()
    assert np.allclose(scan.ranges, 1.0)


def test_range_noise_is_seeded():
    truth = _room()
    node = SensorNode2D(2.0, 2.0, 0.0, 10.0)
    first = sensing_service.raycast_scan(truth, node, 0.05, np.random.default_rng(3))
    second = sensing_service.raycast_scan(truth, node, 0.05, np.random.default_rng(3))
    clean = sensing_service.raycast_scan(truth, node)
    assert np.array_equal(first.ranges, second.ranges)
    assert not np.array_equal(first.ranges, clean.ranges)


def test_fusion_frees_observed_cells_and_blocks_robots():
    truth = _room()
    node = SensorNode2D(1.0, 2.0, 0.0, 1.5)
    scan = sensing_service.raycast_scan(truth, node)
    fused = sensing_service.fuse_unoccupied_area([(node, scan)], truth, np.array([[1.5, 2.0]]), 0.2)
    assert fused.labels_at(np.array([[0.55, 2.05]]))[0] == CELL_FREE
    assert fused.labels_at(np.array([[3.55, 2.05]]))[0] == CELL_UNKNOWN
    assert fused.labels_at(np.array([[1.55, 2.05]]))[0] == CELL_OCCUPIED


def test_fusion_needs_observations():
    with pytest.raises(ArgumentError):
        sensing_service.fuse_unoccupied_area([], _room())


def test_shrink_for_time_saturates_at_the_window():
    params = ShrinkParams(delta=1.0, v_max=0.2, horizon=3, safety_margin=0.5)
    assert params.reduction(5) == pytest.approx(0.6)
    assert params.threshold(1) == pytest.approx(0.7)
    area = _room()
    shrunk = sensing_service.shrink_for_time(area, 5, params)
    assert np.count_nonzero(shrunk.free_mask) < np.count_nonzero(area.free_mask)
    with pytest.raises(ArgumentError):
        sensing_service.shrink_for_time(area, -1, params)


def test_grid_update_frees_the_ray_and_marks_hits():
    truth = sensing_service.padded_truth(_room(2.0))
    grid = sensing_service.new_map(truth)
    scan = sensing_service.raycast_scan(truth, SensorNode2D(1.0, 1.0, 0.0, 5.0))
    sensing_service.grid_update_from_scan(grid, (1.0, 1.0, 0.0), scan)
    assert grid.labels_at(np.array([[1.0, 1.0]]))[0] == CELL_FREE
    assert grid.labels_at(np.array([[1.5, 1.0]]))[0] == CELL_FREE
    assert np.count_nonzero(grid.labels == CELL_OCCUPIED) > 0


def test_occupied_cells_never_become_free():
    grid = sensing_service.new_map(_room(2.0))
    grid.labels[12, 10] = CELL_OCCUPIED
    origin = np.array([1.05, 1.05])
    sensing_service.apply_rays(grid, origin, np.array([[1.85, 1.05]]), np.array([False]))
    assert grid.labels[12, 10] == CELL_OCCUPIED
    assert grid.labels[11, 10] == CELL_FREE


def test_map_complete_requires_no_frontier():
    grid = _room(1.0).with_labels(np.full((10, 10), CELL_OCCUPIED, dtype=np.int8))
    grid.labels[2:8, 2:8] = CELL_FREE
    assert sensing_service.map_complete(grid)
    grid.labels[8, 5] = CELL_UNKNOWN
    grid.invalidate()
    assert not sensing_service.map_complete(grid)
    assert not sensing_service.map_complete(sensing_service.new_map(grid))


def test_depth_camera_sees_the_far_wall():
    truth = geometry_service.rasterize(World3D((0.0, 0.0, 0.0, 4.0, 4.0, 3.0), (), cell_size=0.2))
    camera = DepthCamera3D((1.0, 2.0, 1.5), width=5, height=5, fov_h=math.radians(60), fov_v=math.radians(60))
    depth = sensing_service.render_depth(truth, camera)
    assert depth.shape == (5, 5)
    assert depth[2, 2] == pytest.approx(3.0, abs=0.06)


def test_depth_fusion_carves_in_front_of_the_camera_only():
    truth = geometry_service.rasterize(World3D((0.0, 0.0, 0.0, 4.0, 4.0, 3.0), (), cell_size=0.2))
    camera = DepthCamera3D((1.0, 2.0, 1.5), width=32, height=32)
    depth = sensing_service.render_depth(truth, camera)
    fused = sensing_service.fuse_free_space_3d([(camera, depth)], truth)
    assert fused.labels_at(np.array([[2.1, 2.1, 1.5]]))[0] == CELL_FREE
    assert fused.labels_at(np.array([[0.5, 2.1, 1.5]]))[0] == CELL_UNKNOWN


def test_depth_fusion_does_not_carve_through_close_obstacles():
    wall = BoxObstacle3((1.2, 1.0, 0.5), (1.6, 3.0, 2.5))
    truth = geometry_service.rasterize(World3D((0.0, 0.0, 0.0, 4.0, 4.0, 3.0), (wall,), cell_size=0.1))
    camera = DepthCamera3D((1.0, 2.0, 1.5), width=16, height=16, min_range=0.8)
    depth = sensing_service.render_depth(truth, camera)
    assert not sensing_service.valid_pixels(camera, depth).any()
    fused = sensing_service.fuse_free_space_3d([(camera, depth)], truth)
    assert fused.labels_at(np.array([[2.5, 2.0, 1.5]]))[0] != CELL_FREE
    assert not fused.free_mask.any()


def test_depth_fusion_leaves_space_behind_robots_unknown():
    truth = geometry_service.rasterize(World3D((0.0, 0.0, 0.0, 4.0, 4.0, 3.0), (), cell_size=0.2))
    camera = DepthCamera3D((1.0, 2.0, 1.5), width=32, height=32)
    depth = sensing_service.render_depth(truth, camera)
    behind = np.array([[3.1, 2.1, 1.5]])
    robot = np.array([[2.0, 2.0, 1.5]])

    open_view = sensing_service.fuse_free_space_3d([(camera, depth)], truth)
    assert open_view.labels_at(behind)[0] == CELL_FREE

    fused = sensing_service.fuse_free_space_3d([(camera, depth)], truth, robot, 0.3)
    assert fused.labels_at(behind)[0] == CELL_UNKNOWN
    assert fused.labels_at(np.array([[2.1, 2.1, 1.5]]))[0] == CELL_OCCUPIED
    assert fused.labels_at(np.array([[1.5, 2.1, 1.5]]))[0] == CELL_FREE


def test_sphere_entry_depth_along_the_optical_axis():
    camera = DepthCamera3D((0.0, 0.0, 0.0), width=3, height=3)
    entry = sensing_service.sphere_entry_depth(camera, np.array([[2.0, 0.0, 0.0]]), 0.5)
    assert entry[1, 1] == pytest.approx(1.5)
    assert sensing_service.sphere_entry_depth(camera, np.array([[-2.0, 0.0, 0.0]]), 0.5)[1, 1] == math.inf
    inside = sensing_service.sphere_entry_depth(camera, np.array([[0.1, 0.0, 0.0]]), 0.5)
    assert np.all(inside == 0.0)


def test_carve_limits_follow_the_working_range():
    camera = DepthCamera3D((0.0, 0.0, 0.0), width=3, height=1, min_range=0.5, max_range=4.0)
    limits = sensing_service.carve_limits(camera, np.array([[0.3, 2.0, 4.0]]))
    assert limits[0].tolist() == pytest.approx([0.0, 2.0, 4.0])


def test_vertical_scan_measures_the_ceiling():
    truth = geometry_service.rasterize(World3D((0.0, 0.0, 0.0, 4.0, 4.0, 3.0), (), cell_size=0.1))
    scan = sensing_service.vertical_scan(truth, (1.0, 2.0, 0.0), 1.0, 5.0, math.radians(1.0))
    up = int(np.argmin(np.abs(scan.angles - math.pi / 2)))
    assert not scan.max_range[up]
    assert scan.ranges[up] == pytest.approx(2.0, abs=0.03)


def test_depth_pixels_back_project_along_their_rays():
    camera = DepthCamera3D((1.0, 2.0, 1.5), width=5, height=5, fov_h=math.radians(60), fov_v=math.radians(60))
    depth = np.full((5, 5), 2.0)
    depth[0, 0] = camera.max_range
    points = sensing_service.depth_image_to_points(camera, depth)
    assert len(points) == 24
    assert points[11] == pytest.approx([3.0, 2.0, 1.5])
    assert np.allclose(points[:, 0], 3.0)
    with pytest.raises(ArgumentError):
        sensing_service.depth_image_to_points(camera, np.ones((4, 5)))


def test_line_traversal_agrees_with_dense_sampling():
    grid = geometry_service.empty_grid(np.zeros(2), np.full(2, 64.0), 1.0)
    rng = np.random.default_rng(7)
    agree = total = 0
    for _ in range(1000):
        start, end = rng.uniform(0.0, 64.0, size=(2, 2))
        cells = sensing_service.ray_cells(grid, start, end)
        a = grid.cell_centers(grid.cell_index(start))[0]
        b = grid.cell_centers(grid.cell_index(end))[0]
        t = np.linspace(0.0, 1.0, int(np.ceil(20.0 * np.linalg.norm(b - a))) + 2)
        sampled = {tuple(c) for c in grid.cell_index(a + t[:, None] * (b - a))}
        agree += sum(tuple(c) in sampled for c in cells)
        total += len(cells)
        assert tuple(cells[0]) == tuple(grid.cell_index(start)[0])
        assert tuple(cells[-1]) == tuple(grid.cell_index(end)[0])
    assert agree >= 0.99 * total


def test_map_updates_follow_the_cell_state_machine():
    block = PolyObstacle(((3.5, 1.0), (5.0, 1.0), (5.0, 2.5), (3.5, 2.5)))
    world = World2D((0.0, 0.0, 6.0, 6.0), (DiskObstacle((2.0, 4.0), 0.7), block), cell_size=0.1)
    truth = sensing_service.padded_truth(geometry_service.rasterize(world))
    violations = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        grid = sensing_service.new_map(truth)
        for _ in range(30):
            pose = (rng.uniform(0.3, 5.7), rng.uniform(0.3, 5.7), rng.uniform(-math.pi, math.pi))
            if truth.labels_at(np.array([pose[:2]]))[0] != CELL_FREE:
                continue
            scan = sensing_service.raycast_scan(truth, SensorNode2D(*pose, 3.0), 0.02, rng)
            before = grid.labels.copy()
            after = sensing_service.grid_update_from_scan(grid, pose, scan).labels
            violations += np.count_nonzero((before == CELL_OCCUPIED) & (after != CELL_OCCUPIED))
            violations += np.count_nonzero((before == CELL_FREE) & (after == CELL_UNKNOWN))
        assert np.count_nonzero(grid.labels == CELL_FREE) > 0
        assert np.count_nonzero(grid.labels == CELL_OCCUPIED) > 0
    assert violations == 0
