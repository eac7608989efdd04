"""Artifact writers: trajectory and path tables, metrics, maps and the SVG plot."""

import csv
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from src.config import config
from src.models.geometry import RegionGrid
from src.models.metrics import RunArtifacts, RunMetrics, Trajectory
from src.shared.constants import (
    CELL_FREE,
    CELL_OCCUPIED,
    CELL_UNKNOWN,
    GRAPH_FILE,
    MAP_FILE,
    METRICS_FILE,
    PATH_FILE_TEMPLATE,
    PGM_FREE,
    PGM_OCCUPIED,
    PGM_UNKNOWN,
    PLOT_FILE,
    TRAJECTORY_FILE,
    VOXEL_FILE,
)
from src.shared.exceptions import ArgumentError, OutputError

logger = logging.getLogger(__name__)

# SVG layout, in px
PLOT_WIDTH = 640
MAP_HEIGHT = 480
PANEL_HEIGHT = 200
PLOT_PAD = 40
ROBOT_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _cell(value: object) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


def _points_attr(xy: np.ndarray) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)


def _path_attr(xy: np.ndarray) -> str:
    return "M " + " L ".join(f"{x:.2f},{y:.2f}" for x, y in xy)


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if not hi > lo:
        return np.array([lo])
    return np.linspace(lo, hi, count)


class OutputService:
    """Service for writing run artifacts to disk."""

    @staticmethod
    def resolve_output_dir(cli_dir: str | None = None, scenario_dir: str | None = None) -> Path:
        """
        Pick the artifact directory.

        The command line wins, then the OUTPUT_DIR environment variable, then
        the scenario file, then the built-in default.
        """
        if cli_dir:
            return Path(cli_dir)
        if "output_dir" in config.model_fields_set:
            return Path(config.output_dir)
        return Path(scenario_dir or config.output_dir)

    @staticmethod
    def emit_outputs(metrics: RunMetrics, artifacts: RunArtifacts, directory: str | Path) -> list[Path]:
        """
        Write every artifact the run produced.

        Args:
            metrics: Run metrics
            artifacts: Trajectory, paths, maps and plot geometry
            directory: Target directory, created if missing

        Returns:
            Paths of the written files

        Raises:
            OutputError: Directory cannot be created or a file cannot be written
        """
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            written = [
                OutputService.write_trajectory(artifacts.trajectory, directory / TRAJECTORY_FILE),
                OutputService.write_metrics(metrics, directory / METRICS_FILE),
            ]
            for robot, path in sorted(artifacts.paths.items()):
                written.append(
                    OutputService.write_path(path.points, directory / PATH_FILE_TEMPLATE.format(robot=robot))
                )
            if artifacts.grid is not None:
                written.append(OutputService.write_map_pgm(artifacts.grid, directory / MAP_FILE))
            if artifacts.voxels is not None:
                written.append(OutputService.write_voxels(artifacts.voxels, directory / VOXEL_FILE))
            if artifacts.graph_text is not None:
                target = directory / GRAPH_FILE
                target.write_text(artifacts.graph_text, encoding="utf-8")
                written.append(target)
            plot = directory / PLOT_FILE
            plot.write_text(OutputService.render_svg(metrics, artifacts), encoding="utf-8")
            written.append(plot)
        except OSError as e:
            raise OutputError(
                f"Cannot write artifacts to {directory}: {e}",
                user_message=f"Output directory {directory} is not writable",
            ) from e
        logger.info(f"Wrote {len(written)} artifact(s) to {directory}")
        return written

    # ------------------------------------------------------------------
    # Tables
    # ------------------------------------------------------------------

    @staticmethod
    def write_trajectory(trajectory: Trajectory, target: Path) -> Path:
        with target.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(trajectory.columns)
            for row in trajectory.rows:
                writer.writerow([_cell(v) for v in row])
        return target

    @staticmethod
    def write_path(points: np.ndarray, target: Path) -> Path:
        """Path table ``k,x,y`` or ``k,x,y,z``."""
        points = np.atleast_2d(points)
        header = ["k", "x", "y", "z"][: points.shape[1] + 1]
        with target.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for k, p in enumerate(points):
                writer.writerow([k, *(_cell(float(c)) for c in p)])
        return target

    @staticmethod
    def format_metrics(metrics: RunMetrics) -> str:
        return "".join(f"{key}: {value}\n" for key, value in metrics.as_pairs())

    @staticmethod
    def write_metrics(metrics: RunMetrics, target: Path) -> Path:
        target.write_text(OutputService.format_metrics(metrics), encoding="utf-8")
        return target

    # ------------------------------------------------------------------
    # Maps
    # ------------------------------------------------------------------

    @staticmethod
    def map_image(grid: RegionGrid) -> np.ndarray:
        """Grey levels of a planar map, first row at the top (largest y)."""
        if grid.ndim != 2:
            raise ArgumentError(f"PGM export needs a planar grid, got {grid.ndim} axes")
        levels = np.full(grid.shape, PGM_UNKNOWN, dtype=np.uint8)
        levels[grid.labels == CELL_FREE] = PGM_FREE
        levels[grid.labels == CELL_OCCUPIED] = PGM_OCCUPIED
        return np.ascontiguousarray(levels.T[::-1])

    @staticmethod
    def write_map_pgm(grid: RegionGrid, target: Path) -> Path:
        Image.fromarray(OutputService.map_image(grid)).save(target, format="PPM")
        return target

    @staticmethod
    def write_voxels(voxels: RegionGrid, target: Path) -> Path:
        """One ``x y z state`` line per known voxel, state 0 free and 1 occupied."""
        known = np.argwhere(voxels.labels != CELL_UNKNOWN)
        centers = voxels.cell_centers(known)
        states = voxels.labels[tuple(known.T)]
        with target.open("w", encoding="utf-8") as f:
            for (x, y, z), state in zip(centers, states, strict=True):
                f.write(f"{x:.4f} {y:.4f} {z:.4f} {int(state)}\n")
        logger.debug(f"Exported {len(known)} known voxel(s)")
        return target

    # ------------------------------------------------------------------
    # SVG plot
    # ------------------------------------------------------------------

    @staticmethod
    def render_svg(metrics: RunMetrics, artifacts: RunArtifacts) -> str:
        """
        Trajectories over obstacle outlines, and clearance against time below.

        Each robot gets exactly one ``trajectory`` polyline. The clearance
        panel carries one ``safety-margin`` line at the margin and records
        the plotted minimum in ``data-min``.
        """
        xmin, ymin, xmax, ymax = artifacts.bounds
        inner_w = PLOT_WIDTH - 2 * PLOT_PAD
        inner_h = MAP_HEIGHT - 2 * PLOT_PAD
        scale = min(inner_w / max(xmax - xmin, 1e-9), inner_h / max(ymax - ymin, 1e-9))

        def to_map(xy: np.ndarray) -> np.ndarray:
            xy = np.atleast_2d(np.asarray(xy, dtype=float))[:, :2]
            px = PLOT_PAD + (xy[:, 0] - xmin) * scale
            py = PLOT_PAD + (ymax - xy[:, 1]) * scale
            return np.column_stack([px, py])

        height = MAP_HEIGHT + PANEL_HEIGHT
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_WIDTH}" height="{height}" '
            f'viewBox="0 0 {PLOT_WIDTH} {height}">',
            '<g id="map">',
        ]
        corners = to_map(np.array([[xmin, ymax], [xmax, ymin]]))
        (x0, y0), (x1, y1) = corners
        out.append(
            f'<rect class="bounds" x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
            'fill="none" stroke="#000"/>'
        )
        for outline in artifacts.outlines:
            out.append(f'<polygon class="obstacle" points="{_points_attr(to_map(outline))}" fill="#bbb" stroke="#555"/>')

        for robot, path in sorted(artifacts.paths.items()):
            colour = ROBOT_COLOURS[robot % len(ROBOT_COLOURS)]
            out.append(
                f'<path class="planned" data-robot="{robot}" d="{_path_attr(to_map(path.points))}" '
                f'fill="none" stroke="{colour}" stroke-dasharray="4 3" stroke-opacity="0.6"/>'
            )

        trajectory = artifacts.trajectory
        robots = sorted(set(trajectory.column("robot").tolist())) if "robot" in trajectory.columns else [None]
        for robot in robots:
            part = trajectory if robot is None else trajectory.where("robot", robot)
            if not len(part):
                continue
            xy = np.column_stack([part.column("x"), part.column("y")]).astype(float)
            index = 0 if robot is None else int(robot)
            colour = ROBOT_COLOURS[index % len(ROBOT_COLOURS)]
            out.append(
                f'<polyline class="trajectory" data-robot="{index}" points="{_points_attr(to_map(xy))}" '
                f'fill="none" stroke="{colour}" stroke-width="1.5"/>'
            )
        out.append("</g>")
        out.extend(OutputService._clearance_panel(metrics, artifacts.safety_margin))
        out.append("</svg>")
        return "\n".join(out) + "\n"

    @staticmethod
    def _clearance_panel(metrics: RunMetrics, margin: float) -> list[str]:
        times = np.asarray(metrics.times, dtype=float)
        values = np.asarray(metrics.clearance_trace, dtype=float)
        finite = np.isfinite(values)
        top = MAP_HEIGHT
        inner_w = PLOT_WIDTH - 2 * PLOT_PAD
        inner_h = PANEL_HEIGHT - 2 * PLOT_PAD
        t_hi = float(times.max()) if len(times) else 1.0
        t_hi = t_hi if t_hi > 0 else 1.0
        c_hi = max(float(values[finite].max()) if finite.any() else 0.0, margin) * 1.1 or 1.0

        def px(t: np.ndarray) -> np.ndarray:
            return PLOT_PAD + np.asarray(t, dtype=float) / t_hi * inner_w

        def py(c: np.ndarray) -> np.ndarray:
            return top + PLOT_PAD + (1.0 - np.asarray(c, dtype=float) / c_hi) * inner_h

        out = [
            '<g id="clearance">',
            f'<line class="axis" x1="{PLOT_PAD}" y1="{top + PLOT_PAD + inner_h}" '
            f'x2="{PLOT_PAD + inner_w}" y2="{top + PLOT_PAD + inner_h}" stroke="#000"/>',
            f'<line class="axis" x1="{PLOT_PAD}" y1="{top + PLOT_PAD}" x2="{PLOT_PAD}" '
            f'y2="{top + PLOT_PAD + inner_h}" stroke="#000"/>',
        ]
        for t in _ticks(0.0, t_hi):
            x = float(px(t))
            out.append(
                f'<text class="tick" x="{x:.2f}" y="{top + PLOT_PAD + inner_h + 14}" '
                f'font-size="10" text-anchor="middle">{t:g}</text>'
            )
        for c in _ticks(0.0, c_hi, 3):
            y = float(py(c))
            out.append(
                f'<text class="tick" x="{PLOT_PAD - 4}" y="{y:.2f}" font-size="10" text-anchor="end">{c:.2f}</text>'
            )
        y_margin = float(py(margin))
        out.append(
            f'<line class="safety-margin" x1="{PLOT_PAD}" y1="{y_margin:.2f}" x2="{PLOT_PAD + inner_w}" '
            f'y2="{y_margin:.2f}" stroke="#d62728" stroke-dasharray="6 4"/>'
        )
        if finite.any():
            low = float(values[finite].min())
            xy = np.column_stack([px(times[finite]), py(values[finite])])
            out.append(
                f'<polyline class="clearance" data-min="{low:.6f}" points="{_points_attr(xy)}" '
                'fill="none" stroke="#000"/>'
            )
        out.append("</g>")
        return out


# Global service instance
output_service = OutputService()
