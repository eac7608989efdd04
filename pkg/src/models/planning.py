"""Planning types: paths, field gains, prolongation modes, candidate graphs, roadmaps."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from src.shared.constants import (
    DEFAULT_ATTENUATION,
    DEFAULT_GAIN_CIRCLE,
    DEFAULT_GAIN_INTERVAL,
    DEFAULT_GAIN_REPULSION,
    DEFAULT_OVER_PER_SPACING,
    DEFAULT_PULL_PER_SPACING,
    DEFAULT_THRESHOLD_PER_SPACING,
    DEFAULT_UNDER_PER_SPACING,
)
from src.shared.exceptions import ArgumentError


@dataclass(eq=False)
class PathPolyline:
    """Ordered, approximately equally spaced waypoints p_0..p_n (2D or 3D)."""

    points: np.ndarray
    spacing: float

    def __post_init__(self) -> None:
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not self.spacing > 0:
            raise ArgumentError(f"Path spacing must be positive, got {self.spacing}")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def intervals(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    def length(self) -> float:
        return float(self.intervals().sum())

    def copy(self) -> PathPolyline:
        return PathPolyline(self.points.copy(), self.spacing)


Path3 = PathPolyline


@dataclass(frozen=True)
class FieldGains:
    """Gains and thresholds of the path-adjusting vector fields."""

    interval: float
    repulsion: float
    pull: float
    circle: float
    attenuation: float
    threshold: float
    under: float
    over: float

    def __post_init__(self) -> None:
        for name in ("interval", "repulsion", "pull", "circle", "threshold"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"Gain {name} must be positive")
        if not 0 < self.attenuation < 1:
            raise ArgumentError(f"Attenuation must be in (0, 1), got {self.attenuation}")

    @classmethod
    def for_spacing(cls, spacing: float, **overrides: float) -> FieldGains:
        """Default gains for path spacing L; pull and threshold scale with L."""
        gains = cls(
            interval=DEFAULT_GAIN_INTERVAL,
            repulsion=DEFAULT_GAIN_REPULSION,
            pull=DEFAULT_PULL_PER_SPACING * spacing,
            circle=DEFAULT_GAIN_CIRCLE,
            attenuation=DEFAULT_ATTENUATION,
            threshold=DEFAULT_THRESHOLD_PER_SPACING * spacing,
            under=DEFAULT_UNDER_PER_SPACING * spacing,
            over=DEFAULT_OVER_PER_SPACING * spacing,
        )
        gains = replace(gains, **{k: v for k, v in overrides.items() if v is not None})
        if not (0 < gains.under < spacing < gains.over < 2 * spacing):
            raise ArgumentError("Add/remove thresholds must satisfy 0 < under < L < over < 2L")
        return gains


class ProlongStage(enum.Enum):
    """Prolongation modes: straight toward the target, or around an obstacle."""

    R1 = "R1"
    R2 = "R2"


@dataclass(frozen=True)
class ProlongMode:
    stage: ProlongStage = ProlongStage.R1
    gamma: int = 0
    obstacle: int | None = None

    def __post_init__(self) -> None:
        if self.stage is ProlongStage.R1 and (self.gamma != 0 or self.obstacle is not None):
            raise ArgumentError("Direction and tracked obstacle are defined only in R2")
        if self.stage is ProlongStage.R2 and self.gamma not in (1, -1):
            raise ArgumentError(f"R2 direction must be +1 or -1, got {self.gamma}")


@dataclass(eq=False)
class RelaxResult:
    """Outcome of one path adjustment."""

    path: PathPolyline
    converged: bool
    iterations: int
    max_force: float
    abandoned_reason: str | None = None


@dataclass(eq=False)
class BranchEvent:
    """Snapshot taken where R1 -> R2 happened, ready to continue with the other direction."""

    points: np.ndarray
    mode: ProlongMode
    depth: int


@dataclass(eq=False)
class ProlongResult:
    path: PathPolyline
    reached: bool
    events: list[BranchEvent] = field(default_factory=list)
    branch_count: int = 0
    relax_failures: int = 0


# Tangent graph ------------------------------------------------------------


class VertexKind(enum.Enum):
    TARGET = "T"
    START = "P0"
    A = "A"
    A_PRIME = "A'"
    B = "B"
    B_PRIME = "B'"
    S = "S"
    V = "V"


class EdgeKind(enum.Enum):
    CURVE = "curve"
    CIRCLE = "circle"
    AT = "AT"
    AA = "AA'"
    BT = "BT"
    BB = "BB'"


class CandidateStatus(enum.Enum):
    GROWING = "growing"
    COMPLETED = "completed"
    ABANDONED = "abandoned"


@dataclass(eq=False)
class BoundaryCurve:
    """Closed polyline (last vertex not repeated) with its enclosed signed area."""

    points: np.ndarray
    area: float

    def __len__(self) -> int:
        return len(self.points)


@dataclass(eq=False)
class BoundaryCurves:
    """C_0 (outer curve) followed by the inner curves C_1, C_2, ..."""

    curves: list[BoundaryCurve]

    @property
    def outer(self) -> BoundaryCurve:
        return self.curves[0]

    @property
    def inner(self) -> list[BoundaryCurve]:
        return self.curves[1:]

    def __len__(self) -> int:
        return len(self.curves)


@dataclass(frozen=True)
class TypedVertex:
    """Graph vertex; curve vertices carry their curve id and (fractional) index."""

    key: str
    kind: VertexKind
    point: tuple[float, ...]
    curve: int | None = None
    index: float | None = None
    circle: int | None = None
    walk: int = 0


@dataclass(eq=False)
class GraphG:
    """Typed-vertex candidate graph over boundary curves and initial circles."""

    graph: nx.MultiDiGraph
    curves: BoundaryCurves
    flags: list[str] = field(default_factory=list)

    def vertices(self, kind: VertexKind | None = None) -> list[TypedVertex]:
        data = [d["vertex"] for _, d in self.graph.nodes(data=True)]
        return [v for v in data if kind is None or v.kind is kind]

    def vertex(self, key: str) -> TypedVertex:
        return self.graph.nodes[key]["vertex"]

    def edges(self, kind: EdgeKind | None = None) -> list[tuple[str, str, dict]]:
        return [(u, v, d) for u, v, d in self.graph.edges(data=True) if kind is None or d["kind"] is kind]


@dataclass(eq=False)
class Candidate:
    """Candidate path grown along graph edges."""

    id: int
    vertices: list[str]
    points: np.ndarray
    status: CandidateStatus = CandidateStatus.GROWING
    branches: int = 0

    def raw_length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def edge_sequence(self) -> tuple[str, ...]:
        return tuple(self.vertices)


# Roadmap ------------------------------------------------------------------


@dataclass(frozen=True)
class Prm3Params:
    samples: int
    neighbors: int
    spacing: float
    u_max: float
    speed: float

    def __post_init__(self) -> None:
        if not 0 < self.neighbors < self.samples:
            raise ArgumentError(f"Need 0 < N_c < N_s, got N_c={self.neighbors}, N_s={self.samples}")
        if not (self.spacing > 0 and self.u_max > 0 and self.speed > 0):
            raise ArgumentError("Spacing, turn bound and speed must be positive")


@dataclass(eq=False)
class Prm3Graph:
    """Roadmap: vertex coordinates plus a weighted undirected graph over their indices."""

    vertices: np.ndarray
    graph: nx.Graph
    init: int
    goal: int


@dataclass(frozen=True, eq=False)
class PredictedWorld:
    """Obstacles at time 0 with velocity estimates; obstacle i at step k sits at D_i(0) + v_i * k * delta.

    ``robot_paths`` are already planned robot paths treated as moving points,
    held at their last point after the path ends.
    """

    bounds: tuple[float, float, float, float]
    obstacles: tuple
    velocities: np.ndarray
    delta: float
    robot_paths: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 2)
        if len(velocities) != len(self.obstacles):
            raise ArgumentError("Need one velocity per obstacle")
        if not self.delta > 0:
            raise ArgumentError(f"Sampling interval must be positive, got {self.delta}")
        object.__setattr__(self, "velocities", velocities)

    @property
    def source_count(self) -> int:
        return len(self.obstacles) + len(self.robot_paths)


@dataclass(eq=False)
class SearchResult:
    """Homotopy search outcome: the selected path plus every relaxed completed candidate."""

    path: PathPolyline
    candidates: list[PathPolyline]
    branch_counts: list[int]
    failed: int = 0
    truncated: bool = False
