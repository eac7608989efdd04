"""Tests for the path-adjusting vector fields, relaxation and homotopy search."""

import numpy as np
import pytest

from src.config import config
from src.models.geometry import Circle2, DiskObstacle, PolyObstacle, World2D
from src.models.planning import FieldGains, PathPolyline, PredictedWorld, ProlongMode, ProlongStage
from src.services.geometry_service import geometry_service
from src.services.potential_field_service import (
    FieldSample,
    GridField,
    PredictedField,
    RelaxContext,
    potential_field_service,
)
from src.shared.exceptions import ArgumentError, NoPathError

SPACING = 0.5
GAINS = FieldGains.for_spacing(SPACING)


def _block(x0: float) -> PolyObstacle:
    return PolyObstacle(((x0, 1.0), (x0 + 0.6, 1.0), (x0 + 0.6, 1.6), (x0, 1.6)))


def test_interval_forces_balance_on_equal_spacing():
    points = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]])
    forces = potential_field_service.interval_forces(points, 1.0, 1.0)
    assert forces[1] == pytest.approx([0.0, 0.0])
    assert forces[2] == pytest.approx([-1.0, 0.0])
    assert forces[0] == pytest.approx([0.0, 0.0])


def test_interval_field_rejects_the_start_point():
    path = PathPolyline(np.array([[0.0, 0.0], [0.5, 0.0]]), SPACING)
    with pytest.raises(ArgumentError):
        potential_field_service.field_interval(path, 0, GAINS)


def test_repulsion_acts_only_below_threshold():
    sample = FieldSample(
        margin=np.array([-0.2, 0.3]),
        toward=np.array([[1.0, 0.0], [1.0, 0.0]]),
        inside=np.array([False, False]),
        distance=np.array([0.3, 0.8]),
    )
    forces = potential_field_service.repulsion_forces(sample, GAINS)
    assert forces[0] == pytest.approx([-0.2 * GAINS.repulsion, 0.0])
    assert forces[1] == pytest.approx([0.0, 0.0])


def test_pull_toward_far_target_has_gain_magnitude():
    path = PathPolyline(np.array([[0.0, 0.0], [0.5, 0.0]]), SPACING)
    pull = potential_field_service.field_pull(path, np.array([5.5, 0.0]), ProlongMode(), GAINS)
    assert pull == pytest.approx([GAINS.pull, 0.0])


def test_pull_in_r2_needs_the_tracked_obstacle():
    path = PathPolyline(np.array([[0.0, 0.0], [0.5, 0.0]]), SPACING)
    mode = ProlongMode(ProlongStage.R2, 1, 0)
    with pytest.raises(ArgumentError):
        potential_field_service.field_pull(path, np.array([5.0, 0.0]), mode, GAINS)


def test_pull_in_r2_circles_the_obstacle():
    """At the safety distance only the sideways component remains."""
    path = PathPolyline(np.array([[0.0, 0.0], [0.5, 0.0]]), SPACING)
    mode = ProlongMode(ProlongStage.R2, 1, 0)
    pull = potential_field_service.field_pull(
        path, np.array([5.0, 0.0]), mode, GAINS, tracked=(0.4, np.array([1.0, 0.0])), safety_margin=0.4
    )
    assert pull == pytest.approx([0.0, GAINS.pull])


def test_initial_circle_pushes_points_out():
    circle = Circle2((0.0, 1.0), 1.0)
    points = np.array([[0.0, 0.0], [0.0, 0.5], [3.0, 3.0]])
    forces = potential_field_service.circle_forces(points, circle, np.array([1.0, 0.0]), GAINS)
    assert forces[0] == pytest.approx([0.0, 0.0])
    assert forces[1] == pytest.approx([0.0, -0.5 * GAINS.circle])
    assert forces[2] == pytest.approx([0.0, 0.0])


def test_select_initial_circle_follows_first_point_side():
    left = Circle2((0.0, 1.0), 1.0)
    right = Circle2((0.0, -1.0), 1.0)
    heading = np.array([1.0, 0.0])
    start = np.zeros(2)
    chosen = potential_field_service.select_initial_circle(heading, start, np.array([0.5, 0.2]), (left, right))
    assert chosen is left
    chosen = potential_field_service.select_initial_circle(heading, start, np.array([0.5, -0.2]), (left, right))
    assert chosen is right


def test_velocity_estimate_from_translated_block():
    first = geometry_service.rasterize(World2D((0.0, 0.0, 4.0, 4.0), (_block(1.0),), cell_size=0.1))
    second = geometry_service.rasterize(World2D((0.0, 0.0, 4.0, 4.0), (_block(1.3),), cell_size=0.1))
    estimate = potential_field_service.estimate_obstacle_velocity(first, second, 0.5)
    assert estimate.reliable
    assert estimate.velocity == pytest.approx([0.6, 0.0], abs=1e-9)


def test_velocity_estimate_rejects_bad_interval():
    grid = geometry_service.rasterize(World2D((0.0, 0.0, 4.0, 4.0), (_block(1.0),), cell_size=0.1))
    with pytest.raises(ArgumentError):
        potential_field_service.estimate_obstacle_velocity(grid, grid, 0.0)


def test_predict_obstacle_translates_by_step():
    world = PredictedWorld((0.0, 0.0, 10.0, 10.0), (DiskObstacle((5.0, 5.0), 1.0),), np.array([[1.0, 0.0]]), 0.5)
    predicted = potential_field_service.predict_obstacle(world, 0, 4)
    assert predicted.center == pytest.approx((7.0, 5.0))
    with pytest.raises(ArgumentError):
        potential_field_service.predict_obstacle(world, 0, -1)


def test_relax_equalises_spacing():
    area = geometry_service.rasterize(World2D((0.0, 0.0, 4.0, 4.0), (), cell_size=0.1))
    path = PathPolyline(np.array([[1.0, 2.0], [1.3, 2.0], [2.1, 2.0], [2.4, 2.0]]), SPACING)
    ctx = RelaxContext(field=GridField(area, 0.3), spacing=SPACING)
    result = potential_field_service.relax_path(path, ctx, GAINS)
    assert result.converged
    assert result.path.start == pytest.approx([1.0, 2.0])
    assert result.path.intervals() == pytest.approx([SPACING] * 3, abs=1e-2)


def test_relax_pushes_points_out_of_the_margin():
    area = geometry_service.rasterize(World2D((0.0, 0.0, 4.0, 4.0), (), cell_size=0.1))
    path = PathPolyline(np.array([[2.0, 1.0], [2.0, 0.6], [2.0, 0.2]]), 0.4)
    ctx = RelaxContext(field=GridField(area, 0.5), spacing=0.4)
    result = potential_field_service.relax_path(path, ctx, FieldGains.for_spacing(0.4))
    clearance = area.query(result.path.points).distance
    assert clearance.min() > 0.4


@pytest.mark.slow
def test_homotopy_search_goes_around_a_disk():
    world = PredictedWorld((0.0, 0.0, 10.0, 8.0), (DiskObstacle((5.0, 4.0), 1.0),), np.zeros((1, 2)), 0.5)
    result = potential_field_service.homotopy_search(
        np.array([1.0, 4.0]), np.array([9.0, 4.0]), world, GAINS, SPACING, 0.5
    )
    assert len(result.candidates) >= 1
    assert np.linalg.norm(result.path.end - np.array([9.0, 4.0])) < GAINS.over
    truth = World2D((0.0, 0.0, 10.0, 8.0), (DiskObstacle((5.0, 4.0), 1.0),))
    assert geometry_service.world_clearance(truth, result.path.points).min() > 0.0


def test_single_point_repulsion_and_circle_fields():
    area = geometry_service.rasterize(World2D((0.0, 0.0, 4.0, 4.0), (), cell_size=0.1))
    path = PathPolyline(np.array([[2.05, 2.05], [2.05, 0.25]]), SPACING)
    push = potential_field_service.field_repulsion(path, 1, GridField(area, 0.5), GAINS)
    assert push[1] > 0.0
    assert abs(push[0]) < 0.1 * push[1]
    circle = Circle2((0.0, 1.0), 1.0)
    pull = potential_field_service.field_initial_circle(np.array([0.0, 0.5]), circle, GAINS, np.array([1.0, 0.0]))
    assert pull == pytest.approx([0.0, -0.5 * GAINS.circle])


def test_unconverged_adjustments_drop_every_candidate(monkeypatch):
    monkeypatch.setattr(config, "relax_iteration_cap", 2)
    world = PredictedWorld((0.0, 0.0, 10.0, 8.0), (DiskObstacle((5.0, 4.0), 1.0),), np.zeros((1, 2)), 0.5)
    prolonged = potential_field_service.prolong_path(
        np.array([1.0, 4.0]), np.array([9.0, 4.0]), world, GAINS, SPACING, 0.5
    )
    assert not prolonged.reached
    assert prolonged.relax_failures == 1
    assert len(prolonged.path) == 2
    with pytest.raises(NoPathError):
        potential_field_service.homotopy_search(
            np.array([1.0, 4.0]), np.array([9.0, 4.0]), world, GAINS, SPACING, 0.5
        )


def test_predicted_field_matches_predicted_obstacles():
    world = PredictedWorld((0.0, 0.0, 10.0, 10.0), (DiskObstacle((5.0, 5.0), 1.0),), np.array([[0.4, -0.2]]), 0.5)
    field_ = PredictedField(world, 0.3)
    points = np.array([[2.0, 5.0], [3.0, 4.5], [8.0, 8.0], [5.5, 4.0]])
    steps = np.array([0, 3, 7, 12])
    dist, _, _ = field_.source(0, points, steps)
    for point, k, d in zip(points, steps, dist, strict=True):
        moved = potential_field_service.predict_obstacle(world, 0, int(k))
        expected, _, _ = geometry_service.obstacle_distance(moved, point[None, :])
        assert d == pytest.approx(expected[0])
