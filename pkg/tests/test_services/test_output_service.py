"""Tests for artifact writers and the SVG plot."""

import re
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from src.config import config
from src.models.geometry import RegionGrid
from src.models.metrics import RunArtifacts, RunMetrics, RunStatus, Trajectory
from src.models.planning import PathPolyline
from src.services.output_service import output_service
from src.services.simulation_service import PLANAR_COLUMNS
from src.shared.constants import CELL_FREE, CELL_OCCUPIED, CELL_UNKNOWN, PGM_FREE, PGM_OCCUPIED, PGM_UNKNOWN
from src.shared.exceptions import ArgumentError, OutputError


def _run() -> tuple[RunMetrics, RunArtifacts]:
    trajectory = Trajectory(PLANAR_COLUMNS)
    times = [0.0, 0.5, 1.0]
    for t in times:
        trajectory.append(t, 0, 1.0 + t, 1.0, 0.0, 0.9)
        trajectory.append(t, 1, 3.0 - t, 2.0, 3.14, 0.7)
    metrics = RunMetrics(RunStatus.REACHED, 3, times, [0.9, 0.62, 0.7], path_length=2.0, completion_time=1.0,
                         min_robot_separation=1.1)
    labels = np.full((4, 3), CELL_UNKNOWN, dtype=np.int8)
    labels[0, 0] = CELL_FREE
    labels[3, 2] = CELL_OCCUPIED
    artifacts = RunArtifacts(
        trajectory,
        safety_margin=0.5,
        bounds=(0.0, 0.0, 4.0, 3.0),
        outlines=[np.array([[2.0, 0.5], [2.5, 0.5], [2.5, 1.0]])],
        paths={0: PathPolyline(np.array([[1.0, 1.0], [2.0, 1.0]]), 1.0)},
        grid=RegionGrid(np.zeros(2), 1.0, labels),
        graph_text="P0 T BT 1.0 1.0 2.0 1.0\n",
    )
    return metrics, artifacts


def test_emit_outputs_writes_every_artifact(tmp_path: Path):
    metrics, artifacts = _run()
    written = output_service.emit_outputs(metrics, artifacts, tmp_path / "run")
    names = {p.name for p in written}
    assert names == {"trajectory.csv", "metrics.txt", "path_0.csv", "map.pgm", "graph.txt", "plot.svg"}
    header = (tmp_path / "run" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,robot,x,y,theta,min_clearance"
    assert (tmp_path / "run" / "path_0.csv").read_text().splitlines()[0] == "k,x,y"


def test_metrics_text_lists_key_value_pairs():
    metrics, _ = _run()
    text = output_service.format_metrics(metrics)
    assert "status: reached\n" in text
    assert "min_clearance: 0.620000\n" in text
    assert "min_robot_separation: 1.100000\n" in text


def test_svg_has_one_trajectory_per_robot_and_one_margin_line():
    metrics, artifacts = _run()
    svg = output_service.render_svg(metrics, artifacts)
    assert len(re.findall(r'<polyline class="trajectory"', svg)) == 2
    assert len(re.findall(r'class="safety-margin"', svg)) == 1
    assert f'data-min="{metrics.min_clearance:.6f}"' in svg
    assert svg.count('class="obstacle"') == 1


def test_map_image_uses_grey_levels_with_y_up():
    _, artifacts = _run()
    assert artifacts.grid is not None
    image = output_service.map_image(artifacts.grid)
    assert image.shape == (3, 4)
    assert image[-1, 0] == PGM_FREE
    assert image[0, 3] == PGM_OCCUPIED
    assert image[1, 1] == PGM_UNKNOWN


def test_pgm_file_round_trips_through_pillow(tmp_path: Path):
    _, artifacts = _run()
    assert artifacts.grid is not None
    target = output_service.write_map_pgm(artifacts.grid, tmp_path / "map.pgm")
    assert target.read_bytes().startswith(b"P5")
    with Image.open(target) as image:
        assert np.array_equal(np.asarray(image), output_service.map_image(artifacts.grid))


def test_map_image_needs_a_planar_grid():
    voxels = RegionGrid(np.zeros(3), 1.0, np.zeros((2, 2, 2), dtype=np.int8))
    with pytest.raises(ArgumentError):
        output_service.map_image(voxels)


def test_voxel_export_skips_unknown_voxels(tmp_path: Path):
    labels = np.full((2, 2, 2), CELL_UNKNOWN, dtype=np.int8)
    labels[0, 0, 0] = CELL_FREE
    labels[1, 1, 1] = CELL_OCCUPIED
    target = output_service.write_voxels(RegionGrid(np.zeros(3), 1.0, labels), tmp_path / "voxels.txt")
    assert target.read_text().splitlines() == ["0.5000 0.5000 0.5000 0", "1.5000 1.5000 1.5000 1"]


def test_unwritable_directory_raises_output_error(tmp_path: Path):
    metrics, artifacts = _run()
    blocker = tmp_path / "taken"
    blocker.write_text("not a directory")
    with pytest.raises(OutputError):
        output_service.emit_outputs(metrics, artifacts, blocker)


def test_output_dir_precedence(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.setattr(config, "__pydantic_fields_set__", set())
    assert output_service.resolve_output_dir("cli", "scenario") == Path("cli")
    assert output_service.resolve_output_dir(None, "scenario") == Path("scenario")
    assert output_service.resolve_output_dir(None, None) == Path(config.output_dir)
    monkeypatch.setattr(config, "__pydantic_fields_set__", {"output_dir"})
    assert output_service.resolve_output_dir(None, "scenario") == Path(config.output_dir)
