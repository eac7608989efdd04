"""Candidate-path generation over the tangent-point graph of the reduced free region."""

import logging
import math
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import NamedTuple

import networkx as nx
import numpy as np
from scipy import ndimage
from skimage import measure

from src.config import config
from src.models.geometry import Circle2, RegionGrid
from src.models.planning import (
    BoundaryCurve,
    BoundaryCurves,
    Candidate,
    CandidateStatus,
    EdgeKind,
    GraphG,
    PathPolyline,
    RelaxResult,
    TypedVertex,
    VertexKind,
)
from src.models.vehicle import UnicycleState
from src.services.geometry_service import geometry_service
from src.shared.constants import CONTOUR_SMOOTHING_CELLS, TANGENT_WINDOW_CELLS
from src.shared.exceptions import ArgumentError, EmptyRegionError, NoPathError

logger = logging.getLogger(__name__)

# Turning sense of the (left, right) initial circles: +1 counter-clockwise
CIRCLE_SENSE = (1, -1)

SEGMENT_KINDS = (EdgeKind.AT, EdgeKind.AA, EdgeKind.BT, EdgeKind.BB)


class Hit(NamedTuple):
    """Crossing of a segment with a boundary curve."""

    t: float
    curve: int
    index: float
    point: np.ndarray


class InitialArc(NamedTuple):
    circle: int
    end: str
    points: np.ndarray


@dataclass(eq=False)
class TangentPoints:
    """Typed vertices plus the straight segments and initial arcs joining them."""

    vertices: list[TypedVertex]
    segments: list[tuple[str, str, EdgeKind]]
    arcs: list[InitialArc]
    flags: list[str] = field(default_factory=list)

    def keys(self) -> set[str]:
        return {v.key for v in self.vertices}


def _shoelace(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _curve_point(curve: BoundaryCurve, index: float) -> np.ndarray:
    n = len(curve)
    j = int(math.floor(index)) % n
    s = index - math.floor(index)
    return (1.0 - s) * curve.points[j] + s * curve.points[(j + 1) % n]


def _segment_hits(
    start: np.ndarray,
    end: np.ndarray,
    curves: BoundaryCurves,
    skip: tuple[int, float, int] | None = None,
) -> list[Hit]:
    """Proper crossings of start->end with every curve, nearest first.

    ``skip`` = (curve, index, window) ignores edges of that curve within
    ``window`` vertices of ``index``.
    """
    hits: list[Hit] = []
    d = end - start
    for ci, curve in enumerate(curves.curves):
        a = curve.points
        e = np.roll(a, -1, axis=0) - a
        denom = _cross(d[None, :], e)
        ok = np.abs(denom) > 1e-15
        rel = a - start
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(ok, _cross(rel, e) / denom, -1.0)
            s = np.where(ok, _cross(rel, np.broadcast_to(d, rel.shape)) / denom, -1.0)
        mask = ok & (t > 1e-9) & (t < 1.0 - 1e-9) & (s >= 0.0) & (s < 1.0)
        if skip is not None and skip[0] == ci:
            n = len(a)
            gap = np.abs((np.arange(n) - skip[1] + n / 2) % n - n / 2)
            mask &= gap > skip[2]
        for j in np.flatnonzero(mask):
            hits.append(Hit(float(t[j]), ci, float(j + s[j]), start + t[j] * d))
    hits.sort(key=lambda h: h.t)
    return hits


def _silhouette_indices(curve: BoundaryCurve, viewpoint: np.ndarray, window: int) -> list[int]:
    """Curve vertices where the line from ``viewpoint`` is tangent to the curve.

    Tangency is a sign change of cross(p_j - viewpoint, edge_j) between
    consecutive edges; changes closer than ``window`` vertices are merged and
    cancelling pairs dropped.
    """
    a = curve.points
    n = len(a)
    edges = np.roll(a, -1, axis=0) - a
    side = np.sign(_cross(a - viewpoint, edges))
    for j in range(n):
        if side[j] == 0:
            side[j] = side[j - 1] if side[j - 1] != 0 else 1
    changes = [j for j in range(n) if side[j - 1] != side[j]]
    if not changes:
        return []

    # Rotate so that no cluster wraps around index 0
    gaps = [(changes[(k + 1) % len(changes)] - changes[k]) % n for k in range(len(changes))]
    first = (int(np.argmax(gaps)) + 1) % len(changes)
    ordered = changes[first:] + changes[:first]

    result: list[int] = []
    cluster = [ordered[0]]
    for j in ordered[1:]:
        if (j - cluster[-1]) % n <= window:
            cluster.append(j)
            continue
        if len(cluster) % 2:
            result.append(cluster[len(cluster) // 2])
        cluster = [j]
    if len(cluster) % 2:
        result.append(cluster[len(cluster) // 2])
    return sorted(result)


def _travel(sense: int, angle: float, start: float) -> float:
    """Angle swept from ``start`` to ``angle`` turning with ``sense``, in [0, 2pi)."""
    travel = (sense * (angle - start)) % (2 * math.pi)
    return 0.0 if travel > 2 * math.pi - 1e-9 else travel


def _circle_hits(circle: Circle2, curve: BoundaryCurve) -> list[tuple[float, np.ndarray]]:
    """Intersections of a circle with a closed curve as (curve index, point)."""
    c = np.asarray(circle.center, dtype=float)
    a = curve.points
    e = np.roll(a, -1, axis=0) - a
    f = a - c
    qa = np.einsum("ij,ij->i", e, e)
    qb = 2.0 * np.einsum("ij,ij->i", f, e)
    qc = np.einsum("ij,ij->i", f, f) - circle.radius**2
    disc = qb * qb - 4.0 * qa * qc
    out: list[tuple[float, np.ndarray]] = []
    for j in np.flatnonzero((disc >= 0) & (qa > 0)):
        root = math.sqrt(disc[j])
        for s in ((-qb[j] - root) / (2 * qa[j]), (-qb[j] + root) / (2 * qa[j])):
            if 0.0 <= s < 1.0:
                out.append((j + s, a[j] + s * e[j]))
    return out


def _ray_crossings(origin: np.ndarray, direction: np.ndarray, curve: BoundaryCurve) -> list[tuple[float, np.ndarray]]:
    """Transversal crossings of a ray with a closed curve; grazing contacts do not count."""
    a = curve.points
    n = len(a)
    normal = np.array([-direction[1], direction[0]])
    side = (a - origin) @ normal
    along = (a - origin) @ direction
    out: list[tuple[float, np.ndarray]] = []
    for j in range(n):
        k = (j + 1) % n
        sa, sb = side[j], side[k]
        if sa * sb < 0:
            s = sa / (sa - sb)
            if along[j] + s * (along[k] - along[j]) > 0:
                out.append((j + s, a[j] + s * (a[k] - a[j])))
        elif sa == 0 and along[j] > 0 and side[j - 1] * sb < 0:
            out.append((float(j), a[j].copy()))
    return out


def _curve_slice(curve: BoundaryCurve, start: float, stop: float) -> np.ndarray:
    """Points from fractional index ``start`` forward to ``stop`` (a full loop when equal)."""
    n = len(curve)
    span = (stop - start) % n
    if span == 0:
        span = float(n)
    first = int(math.floor(start)) + 1
    inner = [curve.points[j % n] for j in range(first, int(math.ceil(start + span)))]
    return np.vstack([_curve_point(curve, start), *inner, _curve_point(curve, stop)])


class TangentGraphService:
    """Service for tangent-point graphs and candidate-path enumeration."""

    # ------------------------------------------------------------------
    # Boundary curves
    # ------------------------------------------------------------------

    @staticmethod
    def extract_boundary_curves(region: RegionGrid) -> BoundaryCurves:
        """
        Trace the boundary of a planar free region as closed curves.

        The free mask is padded, lightly smoothed and contoured at half level,
        so curves run along the cell faces between free and non-free cells.
        Every curve is oriented counter-clockwise; the one with the largest
        area is the outer curve and curves outside it are dropped.

        Raises:
            ArgumentError: region is not planar
            EmptyRegionError: region has no free cells
        """
        if region.ndim != 2:
            raise ArgumentError("Boundary curves are defined for planar regions only")
        free = region.free_mask
        if not free.any():
            raise EmptyRegionError("Reduced region has no free cells")

        padded = np.pad(free.astype(float), 1, constant_values=0.0)
        smooth = ndimage.gaussian_filter(padded, CONTOUR_SMOOTHING_CELLS, mode="constant")
        contours = measure.find_contours(smooth, 0.5)

        min_area = region.cell_size**2
        curves: list[BoundaryCurve] = []
        for contour in contours:
            pts = region.origin + (contour[:-1] - 0.5) * region.cell_size
            if len(pts) < 3:
                continue
            area = _shoelace(pts)
            if abs(area) < min_area:
                continue
            if area < 0:
                pts = pts[::-1].copy()
            curves.append(BoundaryCurve(pts, abs(area)))
        if not curves:
            raise EmptyRegionError("Free region too small to trace a boundary")

        curves.sort(key=lambda c: c.area, reverse=True)
        outer, inner = curves[0], curves[1:]
        kept = [c for c in inner if measure.points_in_poly(c.points[:1], outer.points)[0]]
        if len(kept) < len(inner):
            logger.debug(f"Dropped {len(inner) - len(kept)} boundary curve(s) outside the outer curve")
        logger.debug(f"Extracted {1 + len(kept)} boundary curve(s)")
        return BoundaryCurves([outer, *kept])

    # ------------------------------------------------------------------
    # Typed points
    # ------------------------------------------------------------------

    @staticmethod
    def classify_points(
        curves: BoundaryCurves,
        target: np.ndarray,
        pose: UnicycleState,
        circles: tuple[Circle2, Circle2],
        cell_size: float,
    ) -> TangentPoints:
        """
        Find all typed points of the candidate graph.

        A-points are tangency points of lines through the target; a segment to
        the target that crosses another curve ends at an A'-point instead. B-points
        are the exits from the initial circles toward the target (dropped when
        inside an inner curve); a blocked exit segment ends at a B'-point.
        S-points are where the ray from the robot away from the target crosses
        the outer curve. V-points are initial-circle and curve intersections.

        Args:
            curves: Boundary curves of the reduced region
            target: Target point
            pose: Robot pose (p_0 and heading)
            circles: (left, right) initial circles
            cell_size: Grid cell size, the tolerance for coincident points

        Returns:
            TangentPoints with vertices, segments and initial arcs
        """
        target = np.asarray(target, dtype=float)
        p0 = pose.position
        vertices: list[TypedVertex] = [
            TypedVertex("T", VertexKind.TARGET, (float(target[0]), float(target[1]))),
            TypedVertex("P0", VertexKind.START, (float(p0[0]), float(p0[1]))),
        ]
        segments: list[tuple[str, str, EdgeKind]] = []
        flags: list[str] = []
        counters: dict[VertexKind, int] = {}

        def add(kind: VertexKind, point: np.ndarray, **extra: object) -> str:
            curve = extra.get("curve")
            if curve is not None:
                for v in vertices:
                    if v.curve == curve and math.dist(v.point, point) < cell_size:
                        message = f"{kind.value}-point coincides with {v.kind.value}-point {v.key}; keeping {v.key}"
                        logger.debug(message)
                        flags.append(message)
                        return v.key
            n = counters.get(kind, 0)
            counters[kind] = n + 1
            key = f"{kind.value}{n}"
            vertices.append(TypedVertex(key, kind, (float(point[0]), float(point[1])), **extra))  # type: ignore[arg-type]
            return key

        # A / A' points
        for ci, curve in enumerate(curves.curves):
            for j in _silhouette_indices(curve, target, TANGENT_WINDOW_CELLS):
                point = curve.points[j]
                hits = _segment_hits(point, target, curves, skip=(ci, float(j), TANGENT_WINDOW_CELLS))
                if hits and hits[0].curve == ci:
                    logger.debug(f"Tangent point {j} on curve {ci} hidden by its own curve")
                    continue
                a_key = add(VertexKind.A, point, curve=ci, index=float(j))
                if not hits:
                    segments.append((a_key, "T", EdgeKind.AT))
                else:
                    h = hits[0]
                    a2 = add(VertexKind.A_PRIME, h.point, curve=h.curve, index=h.index)
                    segments.append((a_key, a2, EdgeKind.AA))

        # S points
        away = p0 - target
        if np.linalg.norm(away) > 1e-12:
            for index, point in _ray_crossings(p0, away / np.linalg.norm(away), curves.outer):
                add(VertexKind.S, point, curve=0, index=index)

        # V points
        v_points: list[list[tuple[float, str]]] = [[], []]
        for k, circle in enumerate(circles):
            c = np.asarray(circle.center, dtype=float)
            start_angle = math.atan2(p0[1] - c[1], p0[0] - c[0])
            for ci, curve in enumerate(curves.curves):
                for index, point in _circle_hits(circle, curve):
                    travel = _travel(CIRCLE_SENSE[k], math.atan2(point[1] - c[1], point[0] - c[0]), start_angle)
                    if travel * circle.radius < 0.5 * cell_size:
                        continue
                    key = add(VertexKind.V, point, curve=ci, index=index, circle=k, walk=CIRCLE_SENSE[k])
                    v_points[k].append((travel, key))

        # B / B' points and initial arcs
        arcs: list[InitialArc] = []
        for k, circle in enumerate(circles):
            c = np.asarray(circle.center, dtype=float)
            sense = CIRCLE_SENSE[k]
            start_angle = math.atan2(p0[1] - c[1], p0[0] - c[0])
            stops = sorted(v_points[k])
            exit_point = TangentGraphService._circle_exit(circle, sense, target)
            if exit_point is None:
                logger.debug(f"Target inside initial circle {k}, no exit tangent")
            elif any(measure.points_in_poly(exit_point[None, :], inner.points)[0] for inner in curves.inner):
                logger.debug(f"Exit tangent point of initial circle {k} is enclosed by an inner curve")
            else:
                b_key = add(VertexKind.B, exit_point, circle=k)
                hits = _segment_hits(exit_point, target, curves)
                if not hits:
                    segments.append((b_key, "T", EdgeKind.BT))
                else:
                    h = hits[0]
                    b2 = add(VertexKind.B_PRIME, h.point, curve=h.curve, index=h.index)
                    segments.append((b_key, b2, EdgeKind.BB))
                angle = math.atan2(exit_point[1] - c[1], exit_point[0] - c[0])
                stops.append((_travel(sense, angle, start_angle), b_key))
                stops.sort()
            if not stops:
                logger.debug(f"Initial circle {k} has no exit and no curve intersection")
                continue
            travel, end_key = stops[0]
            count = int(math.ceil(travel * circle.radius / (0.5 * cell_size))) + 1
            angles = start_angle + sense * np.linspace(0.0, travel, count)
            points = c + circle.radius * np.column_stack([np.cos(angles), np.sin(angles)])
            arcs.append(InitialArc(k, end_key, points))

        if flags:
            logger.warning(f"{len(flags)} tangent point(s) coincide; kept the first of each")
        return TangentPoints(vertices, segments, arcs, flags)

    @staticmethod
    def _circle_exit(circle: Circle2, sense: int, target: np.ndarray) -> np.ndarray | None:
        """Tangent point from which a robot turning with ``sense`` leaves the circle toward the target."""
        c = np.asarray(circle.center, dtype=float)
        rel = target - c
        dist = float(np.linalg.norm(rel))
        if dist <= circle.radius:
            return None
        base = math.atan2(rel[1], rel[0])
        alpha = math.acos(circle.radius / dist)
        for angle in (base + alpha, base - alpha):
            radial = np.array([math.cos(angle), math.sin(angle)])
            point = c + circle.radius * radial
            motion = sense * np.array([-radial[1], radial[0]])
            if float(motion @ (target - point)) > 0:
                return point
        return None

    # ------------------------------------------------------------------
    # Graph
    # ------------------------------------------------------------------

    @staticmethod
    def build_graph(curves: BoundaryCurves, points: TangentPoints) -> GraphG:
        """
        Assemble the candidate graph.

        Curve vertices split their curve into arcs, each added in both
        directions (``direction`` +1 follows increasing curve index).
        """
        graph = nx.MultiDiGraph()
        for v in points.vertices:
            graph.add_node(v.key, vertex=v)

        def pos(key: str) -> np.ndarray:
            return np.asarray(graph.nodes[key]["vertex"].point, dtype=float)

        for arc in points.arcs:
            graph.add_edge("P0", arc.end, kind=EdgeKind.CIRCLE, circle=arc.circle, points=arc.points)
        for u, v, kind in points.segments:
            graph.add_edge(u, v, kind=kind, points=np.vstack([pos(u), pos(v)]))

        for ci, curve in enumerate(curves.curves):
            on_curve = sorted(
                (vx for vx in points.vertices if vx.curve == ci and vx.index is not None),
                key=lambda vx: vx.index,  # type: ignore[arg-type, return-value]
            )
            for i, u in enumerate(on_curve):
                w = on_curve[(i + 1) % len(on_curve)]
                forward = _curve_slice(curve, u.index, w.index)  # type: ignore[arg-type]
                graph.add_edge(u.key, w.key, kind=EdgeKind.CURVE, curve=ci, direction=1, points=forward)
                graph.add_edge(w.key, u.key, kind=EdgeKind.CURVE, curve=ci, direction=-1, points=forward[::-1])

        logger.debug(f"Candidate graph: {graph.number_of_nodes()} vertices, {graph.number_of_edges()} edges")
        return GraphG(graph, curves, list(points.flags))

    @staticmethod
    def export_graph(graph: GraphG) -> str:
        """Plain-text edge list: ``u v kind x_u y_u x_v y_v`` per line."""
        lines = []
        for u, v, data in graph.graph.edges(data=True):
            pu, pv = graph.vertex(u).point, graph.vertex(v).point
            lines.append(f"{u} {v} {data['kind'].value} {pu[0]:.4f} {pu[1]:.4f} {pv[0]:.4f} {pv[1]:.4f}")
        return "\n".join(lines) + ("\n" if lines else "")

    # ------------------------------------------------------------------
    # Candidates
    # ------------------------------------------------------------------

    @staticmethod
    def _out_edge(graph: GraphG, key: str, predicate: Callable[[dict], bool]) -> tuple[str, dict] | None:
        for _, v, data in graph.graph.out_edges(key, data=True):
            if predicate(data):
                return v, data
        return None

    @staticmethod
    def generate_candidates(graph: GraphG, cap: int | None = None) -> list[Candidate]:
        """
        Enumerate candidate paths by walking the graph.

        Two candidates leave p_0 along the initial circles. At an A- or
        B-point a candidate follows its segment; at an A'- or B'-point it is
        duplicated and the two copies follow the curve in opposite directions
        until an A- or S-point; at a V-point it follows the curve in the
        turning sense of its circle. Reaching an S-point abandons a candidate,
        reaching the target completes it. Candidates are processed first in,
        first out; revisiting a vertex abandons the candidate.
        """
        cap = cap or config.candidate_worklist_cap
        queue: deque[tuple[Candidate, int]] = deque()
        results: list[Candidate] = []
        seen: set[tuple[str, ...]] = set()
        next_id = 0
        truncated = False

        start = np.asarray(graph.vertex("P0").point, dtype=float)[None, :]
        for _, end, data in sorted(graph.graph.out_edges("P0", data=True), key=lambda e: e[2]["circle"]):
            cand = Candidate(next_id, ["P0", end], np.vstack([start, data["points"][1:]]))
            next_id += 1
            queue.append((cand, 0))

        while queue:
            cand, direction = queue.popleft()
            while cand.status is CandidateStatus.GROWING:
                key = cand.vertices[-1]
                vertex = graph.vertex(key)
                kind = vertex.kind

                if kind is VertexKind.TARGET:
                    cand.status = CandidateStatus.COMPLETED
                    break
                if kind is VertexKind.S:
                    cand.status = CandidateStatus.ABANDONED
                    break

                if kind in (VertexKind.A, VertexKind.B) and direction == 0:
                    step = TangentGraphService._out_edge(graph, key, lambda d: d["kind"] in SEGMENT_KINDS)
                elif kind in (VertexKind.A_PRIME, VertexKind.B_PRIME) and direction == 0:
                    if next_id >= cap:
                        truncated = True
                    else:
                        twin = Candidate(next_id, list(cand.vertices), cand.points.copy(), branches=cand.branches + 1)
                        next_id += 1
                        queue.append((twin, -1))
                        cand.branches += 1
                    direction = 1
                    continue
                elif kind is VertexKind.V and direction == 0:
                    direction = vertex.walk
                    continue
                elif direction != 0:
                    step = TangentGraphService._out_edge(
                        graph, key, lambda d, s=direction: d["kind"] is EdgeKind.CURVE and d["direction"] == s
                    )
                else:
                    step = None

                if step is None:
                    logger.debug(f"Candidate {cand.id} stuck at {key}")
                    cand.status = CandidateStatus.ABANDONED
                    break
                nxt, data = step
                if nxt in cand.vertices:
                    logger.debug(f"Candidate {cand.id} revisits {nxt}, abandoned")
                    cand.status = CandidateStatus.ABANDONED
                    break
                cand.vertices.append(nxt)
                cand.points = np.vstack([cand.points, data["points"][1:]])
                if direction != 0 and graph.vertex(nxt).kind in (VertexKind.A, VertexKind.S):
                    direction = 0

            signature = cand.edge_sequence()
            if signature in seen:
                logger.debug(f"Candidate {cand.id} duplicates an earlier candidate, dropped")
                continue
            seen.add(signature)
            results.append(cand)

        if truncated:
            message = f"candidate worklist truncated at {cap}"
            graph.flags.append(message)
            logger.warning(f"Candidate worklist truncated at {cap} candidates")
        results.sort(key=lambda c: c.id)
        completed = sum(c.status is CandidateStatus.COMPLETED for c in results)
        logger.debug(f"Generated {len(results)} candidate(s), {completed} completed")
        return results

    @staticmethod
    def select_candidate(
        candidates: list[Candidate],
        spacing: float,
        relax: Callable[[PathPolyline], RelaxResult],
        fast: bool = False,
    ) -> PathPolyline:
        """
        Relax completed candidates and return the shortest adjusted path.

        Args:
            candidates: Output of generate_candidates
            spacing: Path spacing L used to resample raw candidates
            relax: Path adjustment for one resampled candidate
            fast: Relax only the shortest raw candidate, falling back to the
                next shortest when it fails

        Raises:
            NoPathError: no completed candidate survives relaxation
        """
        completed = [c for c in candidates if c.status is CandidateStatus.COMPLETED]
        if not completed:
            raise NoPathError("No completed candidate path")
        completed.sort(key=lambda c: (c.raw_length(), c.branches, c.id))

        best: PathPolyline | None = None
        for cand in completed:
            raw = geometry_service.resample_polyline(cand.points, spacing)
            if np.linalg.norm(raw[-1] - cand.points[-1]) > 1e-9:
                raw = np.vstack([raw, cand.points[-1]])
            result = relax(PathPolyline(raw, spacing))
            if not result.converged:
                reason = result.abandoned_reason or "did not converge"
                logger.info(f"Candidate {cand.id} dropped: {reason}")
                continue
            if best is None or result.path.length() < best.length():
                best = result.path
            if fast:
                break

        if best is None:
            raise NoPathError(f"All {len(completed)} completed candidate(s) failed adjustment")
        return best

    @staticmethod
    def plan(
        region: RegionGrid,
        target: np.ndarray,
        pose: UnicycleState,
        circles: tuple[Circle2, Circle2],
    ) -> tuple[GraphG, list[Candidate]]:
        """Curves, typed points, graph and candidates for one planning step."""
        curves = TangentGraphService.extract_boundary_curves(region)
        points = TangentGraphService.classify_points(curves, target, pose, circles, region.cell_size)
        graph = TangentGraphService.build_graph(curves, points)
        return graph, TangentGraphService.generate_candidates(graph)


# Global service instance
tangent_graph_service = TangentGraphService()
