"""Scenario file loading, validation and serialization."""

import logging
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from src.models.geometry import AssumptionContext, AssumptionViolation
from src.models.scenario import Scenario
from src.services.geometry_service import geometry_service
from src.services.vehicle_service import vehicle_service
from src.shared.constants import MODE_EXPLORE2D, MODE_EXPLORE3D, MODE_NAVIGATE3D, MODE_PLAN2D
from src.shared.exceptions import (
    ArgumentError,
    AssumptionViolationError,
    InvariantViolationError,
    ScenarioError,
    ScenarioParseError,
    UnknownKeyError,
)

logger = logging.getLogger(__name__)

Location = tuple[str | int, ...]


def _line_index(node: yaml.Node, path: Location = (), out: dict[Location, int] | None = None) -> dict[Location, int]:
    """Map every key path in a composed YAML tree to its 1-based line."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            child = (*path, key.value)
            out[child] = key.start_mark.line + 1
            _line_index(value, child, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_index(item, (*path, i), out)
    return out


def _locate(lines: dict[Location, int], loc: Location) -> int | None:
    """Line of the deepest known prefix of ``loc``."""
    for end in range(len(loc), -1, -1):
        line = lines.get(tuple(loc[:end]))
        if line is not None:
            return line
    return None


def _dotted(loc: Location) -> str:
    return ".".join(str(part) for part in loc)


class ScenarioService:
    """Service for reading and writing scenario files."""

    @staticmethod
    def parse_scenario(text: str, source: str = "<string>") -> Scenario:
        """
        Parse and validate scenario text.

        Args:
            text: YAML document
            source: Name used in log messages

        Returns:
            Validated scenario

        Raises:
            ScenarioParseError: Text is not valid YAML or not a mapping
            UnknownKeyError: A key is not part of the schema
            InvariantViolationError: A value breaks a type invariant
        """
        try:
            root = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ScenarioParseError(f"Invalid YAML in {source}: {getattr(e, 'problem', e)}", line=line) from e
        if root is None or not isinstance(data, dict):
            raise ScenarioParseError(f"Scenario {source} must be a mapping", line=1)

        lines = _line_index(root)
        try:
            scenario = Scenario.model_validate(data)
        except ValidationError as e:
            raise ScenarioService._translate(e, lines) from e
        ScenarioService._materialize(scenario, lines)
        logger.debug(f"Loaded {scenario.mode} scenario from {source}")
        return scenario

    @staticmethod
    def load_scenario(path: str | Path) -> Scenario:
        """Read and validate a scenario file."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioParseError(f"Cannot read scenario file {path}: {e.strerror or e}") from e
        return ScenarioService.parse_scenario(text, str(path))

    @staticmethod
    def dump_scenario(scenario: Scenario, path: str | Path | None = None) -> str:
        """Serialize a scenario to YAML; loading the result yields an equal scenario."""
        data = scenario.model_dump(mode="json", exclude_none=True)
        text = yaml.safe_dump(data, sort_keys=False, default_flow_style=None)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @staticmethod
    def with_overrides(scenario: Scenario, seed: int | None = None, q0: float | None = None) -> Scenario:
        """Copy with a new seed and, for exploration scenarios, a new branch probability."""
        data: dict[str, Any] = scenario.model_dump(mode="json", exclude_none=True)
        if seed is not None:
            data["seed"] = seed
        if q0 is not None:
            if "explorer" not in data:
                raise ArgumentError(f"Branch probability only applies to exploration, not {scenario.mode}")
            data["explorer"]["q0"] = q0
        try:
            return Scenario.model_validate(data)
        except ValidationError as e:
            raise ScenarioService._translate(e, {}) from e

    @staticmethod
    def _translate(error: ValidationError, lines: dict[Location, int]) -> ScenarioError:
        first = error.errors()[0]
        loc: Location = tuple(p for p in first["loc"] if isinstance(p, (str, int)))
        field = _dotted(loc) or None
        line = _locate(lines, loc)
        if first["type"] == "extra_forbidden":
            return UnknownKeyError(f"Unknown key '{field}'", line=line, field=field)
        message = first["msg"].removeprefix("Value error, ")
        where = f"{field}: " if field else ""
        return InvariantViolationError(f"{where}{message}", line=line, field=field)

    @staticmethod
    def _materialize(scenario: Scenario, lines: dict[Location, int]) -> None:
        """Build the value types once so their own invariants surface as scenario errors."""
        checks: list[tuple[Location, Any]] = []
        for i, obstacle in enumerate(scenario.world.obstacles):
            build = obstacle.spatial if scenario.world.is_3d else obstacle.planar
            checks.append((("world", "obstacles", i), build))
        checks.append((("world",), scenario.world.world3d if scenario.world.is_3d else scenario.world.world2d))
        for i, robot in enumerate(scenario.robots):
            checks.append((("robots", i), robot.vehicle3 if scenario.world.is_3d else robot.unicycle))
        if scenario.planner is not None:
            checks.append((("planner",), scenario.shrink_params))
            checks.append((("planner", "gains"), scenario.field_gains))
        if scenario.explorer is not None:
            checks.append((("explorer",), scenario.explorer_config))
        for i, node in enumerate(scenario.sensors.nodes):
            checks.append((("sensors", "nodes", i), node.node))
        for i, camera in enumerate(scenario.sensors.cameras):
            checks.append((("sensors", "cameras", i), camera.camera))
        for loc, build in checks:
            try:
                build()
            except ArgumentError as e:
                field = _dotted(loc)
                raise InvariantViolationError(f"{field}: {e}", line=_locate(lines, loc), field=field) from e

    # ------------------------------------------------------------------
    # World assumptions
    # ------------------------------------------------------------------

    @staticmethod
    def assumption_context(scenario: Scenario) -> AssumptionContext:
        robot = scenario.robots[0]
        if scenario.mode in (MODE_EXPLORE2D, MODE_EXPLORE3D):
            assert scenario.explorer is not None
            return AssumptionContext(
                safety_margin=scenario.explorer.d0,
                r_min=vehicle_service.min_turn_radius(robot.params),
                speed=robot.v,
                poses=(robot.start,),
                require_margin_over_radius=True,
            )
        assert scenario.planner is not None
        planner = scenario.planner
        poses = tuple(r.start for r in scenario.robots)
        targets = tuple(r.target for r in scenario.robots if r.target is not None)
        return AssumptionContext(
            safety_margin=planner.safety_margin,
            r_min=max(vehicle_service.min_turn_radius(r.params) for r in scenario.robots),
            speed=min(r.v for r in scenario.robots),
            poses=poses,
            targets=targets,
            v_max=planner.v_max,
            obstacle_speed_bound=scenario.mode == MODE_PLAN2D and planner.v_max > 0,
            circle_margin=planner.safety_margin if scenario.mode != MODE_NAVIGATE3D else None,
        )

    @staticmethod
    def check_assumptions(scenario: Scenario, force: bool = False) -> list[AssumptionViolation]:
        """
        Validate the world against the planning assumptions.

        Raises:
            AssumptionViolationError: Violations found and ``force`` not set
        """
        world = scenario.world.world3d() if scenario.world.is_3d else scenario.world.world2d()
        violations = geometry_service.validate_scenario(world, ScenarioService.assumption_context(scenario))
        if violations and not force:
            summary = "; ".join(f"[{v.code}] {v.message}" for v in violations)
            raise AssumptionViolationError(
                f"World violates {len(violations)} assumption(s): {summary}",
                user_message=f"{len(violations)} assumption violation(s), first: {violations[0].message}",
            )
        for v in violations:
            logger.warning(f"Ignoring assumption violation [{v.code}]: {v.message}")
        return violations


# Global service instance
scenario_service = ScenarioService()
