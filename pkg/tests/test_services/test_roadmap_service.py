"""Tests for roadmap rough paths and 3D path adjustment."""

import math

import networkx as nx
import numpy as np
import pytest

from src.models.planning import FieldGains, Prm3Graph, Prm3Params
from src.models.sensing import ShrinkParams
from src.models.vehicle import Vehicle3State
from src.services.geometry_service import geometry_service
from src.services.roadmap_service import ValidAreaField, roadmap_service
from src.services.vehicle_service import vehicle_service
from src.shared.constants import CELL_OCCUPIED
from src.shared.exceptions import ArgumentError, EmptyRegionError, NoPathError

SHRINK = ShrinkParams(delta=0.5, v_max=0.0, horizon=2, safety_margin=0.3, robot_radius=0.3)


def _box():
    return geometry_service.empty_grid(np.zeros(3), np.full(3, 3.0), 0.1)


def _state(x: float = 0.8) -> Vehicle3State:
    return Vehicle3State(np.array([x, 1.5, 1.5]), np.array([1.0, 0.0, 0.0]))


def test_samples_lie_in_free_cells():
    region = geometry_service.reduce(_box(), 0.5)
    samples = roadmap_service.sample_free(region, 200, np.random.default_rng(1))
    assert samples.shape == (200, 3)
    assert region.is_free(samples).all()


def test_sampling_rejects_bad_requests():
    region = _box()
    with pytest.raises(ArgumentError):
        roadmap_service.sample_free(region, -1, np.random.default_rng(0))
    empty = region.with_labels(np.full(region.shape, CELL_OCCUPIED, dtype=np.int8))
    with pytest.raises(EmptyRegionError):
        roadmap_service.sample_free(empty, 5, np.random.default_rng(0))


def test_heading_bound_follows_turning_ability():
    assert roadmap_service.heading_bound(Prm3Params(10, 3, 0.5, 1.0, 0.5)) == pytest.approx(math.pi / 6)
    assert roadmap_service.heading_bound(Prm3Params(10, 3, 0.5, 4.0, 0.5)) == pytest.approx(math.pi / 2)


def test_start_edges_respect_the_heading_bound():
    params = Prm3Params(samples=4, neighbors=3, spacing=0.5, u_max=1.0, speed=0.5)
    samples = np.array([[1.5, 1.5, 1.5], [0.3, 1.5, 1.5]])
    state = Vehicle3State(np.array([1.0, 1.5, 1.5]), np.array([1.0, 0.0, 0.0]))
    roadmap = roadmap_service.connect_prm(samples, params, _box(), state, np.array([2.5, 2.0, 1.5]))
    assert roadmap.graph.has_edge(0, 2)
    assert not roadmap.graph.has_edge(0, 3)
    assert roadmap_service.shortest_prm_path(roadmap) == [0, 1]


def test_disconnected_roadmap_has_no_path():
    graph = nx.Graph()
    graph.add_nodes_from([0, 1])
    roadmap = Prm3Graph(np.zeros((2, 3)), graph, 0, 1)
    with pytest.raises(NoPathError):
        roadmap_service.shortest_prm_path(roadmap)


def test_short_path_keeps_both_endpoints():
    path = roadmap_service.resample_equal(np.array([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]]), 0.5)
    assert len(path) == 2
    assert path.end == pytest.approx([0.2, 0.0, 0.0])


def test_valid_area_blocks_other_robots():
    other = (np.array([[1.5, 1.5, 1.5], [1.5, 2.0, 1.5]]),)
    area = roadmap_service.valid_area(_box(), 0, SHRINK, other)
    assert not area.is_free(np.array([[1.5, 1.5, 1.5]]))[0]
    assert area.is_free(np.array([[0.6, 0.6, 0.6]]))[0]


def test_rough_path_joins_robot_and_goal():
    params = Prm3Params(samples=80, neighbors=8, spacing=0.5, u_max=2.0, speed=0.5)
    goal = np.array([2.2, 1.5, 1.5])
    path = roadmap_service.rough_path(_box(), _state(), goal, params, SHRINK, np.random.default_rng(0))
    assert path.start == pytest.approx(_state().s)
    assert np.linalg.norm(path.end - goal) <= params.spacing
    assert np.all(path.intervals() <= params.spacing + 1e-9)


def test_relax3_settles_a_straight_path():
    state = _state()
    path = roadmap_service.resample_equal(np.array([state.s, [2.2, 1.5, 1.5]]), 0.5)
    torus = vehicle_service.initial_torus(state, 0.25)
    result = roadmap_service.relax3(path, _box(), SHRINK, torus, FieldGains.for_spacing(0.5), np.array([2.2, 1.5, 1.5]))
    assert result.converged
    assert result.path.start == pytest.approx(state.s)


def test_shortest_prm_path_matches_exhaustive_search():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        n = int(rng.integers(2, 11))
        vertices = rng.uniform(0.0, 5.0, size=(n, 3))
        graph = nx.gnp_random_graph(n, 0.4, seed=int(rng.integers(2**31)))
        for i, j in graph.edges:
            graph[i][j]["weight"] = float(np.linalg.norm(vertices[i] - vertices[j]))
        roadmap = Prm3Graph(vertices, graph, 0, 1)
        candidates = list(nx.all_simple_paths(graph, 0, 1))
        if not candidates:
            with pytest.raises(NoPathError):
                roadmap_service.shortest_prm_path(roadmap)
            continue
        best = min(nx.path_weight(graph, p, "weight") for p in candidates)
        order = roadmap_service.shortest_prm_path(roadmap)
        assert order[0] == 0 and order[-1] == 1
        assert nx.path_weight(graph, order, "weight") == pytest.approx(best)


def test_valid_area_field_measures_each_step_against_its_own_area():
    other = (np.array([[1.5, 1.5, 1.5], [1.5, 2.2, 1.5]]),)
    shrink = ShrinkParams(delta=0.5, v_max=0.4, horizon=2, safety_margin=0.3, robot_radius=0.3)
    field_ = ValidAreaField(_box(), shrink, other)
    points = np.array([[1.5, 1.9, 1.5], [1.5, 1.9, 1.5], [0.9, 0.9, 0.9], [0.9, 0.9, 0.9]])
    steps = np.array([0, 1, 1, 5])
    sample = field_.sample(points, steps)
    for point, k, margin in zip(points, steps, sample.margin, strict=True):
        area = roadmap_service.valid_area(_box(), int(k), shrink, other)
        assert margin == pytest.approx(area.query(point[None, :]).distance[0] - shrink.safety_margin)
    assert sample.margin[0] > sample.margin[1]
    assert sample.margin[2] > sample.margin[3]


def test_relax3_runs_against_other_robot_paths():
    state = _state()
    goal = np.array([2.2, 1.5, 1.5])
    other = (np.array([[2.0, 0.5, 2.5], [2.0, 0.6, 2.5]]),)
    path = roadmap_service.resample_equal(np.array([state.s, goal]), 0.5)
    torus = vehicle_service.initial_torus(state, 0.25)
    result = roadmap_service.relax3(path, _box(), SHRINK, torus, FieldGains.for_spacing(0.5), goal, other)
    assert result.converged
    assert result.path.start == pytest.approx(state.s)
