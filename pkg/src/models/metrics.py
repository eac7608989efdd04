"""Run results: trajectories, exploration outcomes and run metrics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from src.models.geometry import RegionGrid
from src.models.planning import PathPolyline
from src.shared.exceptions import ArgumentError


class RunStatus(enum.Enum):
    REACHED = "reached"
    COMPLETED = "completed"
    FAILED = "failed"
    TIMEOUT = "timeout"


@dataclass(eq=False)
class Trajectory:
    """Row-oriented trajectory table with fixed columns."""

    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def append(self, *values: object) -> None:
        if len(values) != len(self.columns):
            raise ArgumentError(f"Expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows])

    def where(self, name: str, value: object) -> Trajectory:
        j = self.columns.index(name)
        return Trajectory(self.columns, [row for row in self.rows if row[j] == value])

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(eq=False)
class ExplorationResult:
    """Outcome of one exploration run."""

    trajectory: Trajectory
    grid: RegionGrid
    completed: bool
    completion_time: float | None
    steps: int
    clearance: list[float]
    times: list[float]
    voxels: RegionGrid | None = None
    estimates: list[tuple[float, float, float]] = field(default_factory=list)
    transitions: list[tuple[float, str, str]] = field(default_factory=list)

    @property
    def min_clearance(self) -> float:
        return min(self.clearance) if self.clearance else math.inf


@dataclass(eq=False)
class RunMetrics:
    """Summary of a scenario run; traces hold one entry per step."""

    status: RunStatus
    steps: int
    times: list[float]
    clearance_trace: list[float]
    path_length: float = 0.0
    completion_time: float | None = None
    seed: int = 0
    q0: float | None = None
    min_robot_separation: float | None = None
    failure: str | None = None

    def __post_init__(self) -> None:
        if not (len(self.times) == len(self.clearance_trace) == self.steps):
            raise ArgumentError(
                f"Traces must have one entry per step ({self.steps}), "
                f"got {len(self.times)} times and {len(self.clearance_trace)} clearances"
            )

    @property
    def reached(self) -> bool:
        return self.status in (RunStatus.REACHED, RunStatus.COMPLETED)

    @property
    def min_clearance(self) -> float:
        return min(self.clearance_trace) if self.clearance_trace else math.inf

    def as_pairs(self) -> list[tuple[str, str]]:
        """Key/value pairs for the metrics text block."""
        pairs = [
            ("status", self.status.value),
            ("reached", str(self.reached).lower()),
            ("path_length", f"{self.path_length:.6f}"),
            ("min_clearance", f"{self.min_clearance:.6f}"),
            ("completion_time", "none" if self.completion_time is None else f"{self.completion_time:.6f}"),
            ("steps", str(self.steps)),
            ("seed", str(self.seed)),
        ]
        if self.q0 is not None:
            pairs.append(("q0", f"{self.q0:g}"))
        if self.min_robot_separation is not None:
            pairs.append(("min_robot_separation", f"{self.min_robot_separation:.6f}"))
        if self.failure:
            pairs.append(("failure", self.failure))
        return pairs


@dataclass(eq=False)
class RunArtifacts:
    """Everything the output writers need besides the metrics."""

    trajectory: Trajectory
    safety_margin: float
    bounds: tuple[float, float, float, float]
    outlines: list[np.ndarray] = field(default_factory=list)
    paths: dict[int, PathPolyline] = field(default_factory=dict)
    grid: RegionGrid | None = None
    voxels: RegionGrid | None = None
    graph_text: str | None = None
