"""Tests for scenario parsing, error locations, serialization and assumption checks."""

from pathlib import Path

import pytest

from src.services.scenario_service import scenario_service
from src.shared.exceptions import (
    ArgumentError,
    AssumptionViolationError,
    InvariantViolationError,
    ScenarioParseError,
    UnknownKeyError,
)


PLAN = """\
mode: plan2d
seed: 4
world:
  bounds: [0.0, 0.0, 10.0, 8.0]
  obstacles:
    - kind: disk
      center: [5.0, 4.0]
      radius: 1.0
robots:
  - start: [1.5, 1.5, 0.0]
    target: [8.5, 6.5]
    v: 0.5
    u_max: 2.0
planner:
  delta: 0.3
  safety_margin: 0.5
"""


def test_parse_builds_the_value_types():
    scenario = scenario_service.parse_scenario(PLAN)
    assert scenario.mode == "plan2d"
    assert scenario.seed == 4
    world = scenario.world.world2d()
    assert len(world.obstacles) == 1
    assert scenario.spacing == pytest.approx(0.15)
    assert scenario.field_gains().pull == pytest.approx(0.04 * 0.15)


def test_unknown_key_reports_its_line():
    text = PLAN.replace("  bounds:", "  colour: red\n  bounds:")
    with pytest.raises(UnknownKeyError) as excinfo:
        scenario_service.parse_scenario(text)
    assert excinfo.value.line == 4
    assert excinfo.value.field == "world.colour"
    assert excinfo.value.user_message.startswith("line 4:")


def test_out_of_range_value_is_an_invariant_violation():
    text = PLAN.replace("radius: 1.0", "radius: -1.0")
    with pytest.raises(InvariantViolationError) as excinfo:
        scenario_service.parse_scenario(text)
    assert excinfo.value.field == "world.obstacles.0.radius"
    assert excinfo.value.line == 8


def test_self_intersecting_polygon_is_located():
    text = PLAN.replace(
        "    - kind: disk\n      center: [5.0, 4.0]\n      radius: 1.0\n",
        "    - kind: polygon\n      points: [[4, 3], [6, 5], [6, 3], [4, 5]]\n",
    )
    with pytest.raises(InvariantViolationError) as excinfo:
        scenario_service.parse_scenario(text)
    assert excinfo.value.field == "world.obstacles.0"
    assert excinfo.value.line == 6


def test_mode_requirements_are_checked():
    text = PLAN.replace("    target: [8.5, 6.5]\n", "")
    with pytest.raises(InvariantViolationError):
        scenario_service.parse_scenario(text)


def test_broken_yaml_is_a_parse_error(scenarios_dir: Path):
    with pytest.raises(ScenarioParseError):
        scenario_service.parse_scenario("mode: [plan2d\n")
    with pytest.raises(ScenarioParseError):
        scenario_service.parse_scenario("- just\n- a list\n")
    with pytest.raises(ScenarioParseError):
        scenario_service.load_scenario(scenarios_dir / "missing.yaml")


@pytest.mark.parametrize("name", ["plan2d", "navigate2d", "navigate3d", "explore2d", "explore3d"])
def test_shipped_scenarios_survive_a_dump(name: str, tmp_path: Path, scenarios_dir: Path):
    scenario = scenario_service.load_scenario(scenarios_dir / f"{name}.yaml")
    target = tmp_path / "copy.yaml"
    scenario_service.dump_scenario(scenario, target)
    assert scenario_service.load_scenario(target) == scenario


def test_overrides_replace_seed_and_branch_probability(scenarios_dir: Path):
    explore = scenario_service.load_scenario(scenarios_dir / "explore2d.yaml")
    changed = scenario_service.with_overrides(explore, seed=9, q0=0.25)
    assert changed.seed == 9
    assert changed.explorer is not None and changed.explorer.q0 == 0.25
    assert explore.explorer is not None and explore.explorer.q0 == 0.5
    with pytest.raises(ArgumentError):
        scenario_service.with_overrides(scenario_service.parse_scenario(PLAN), q0=0.3)


def test_assumption_violations_block_unless_forced():
    text = PLAN.replace("target: [8.5, 6.5]", "target: [5.0, 4.0]")
    scenario = scenario_service.parse_scenario(text)
    with pytest.raises(AssumptionViolationError):
        scenario_service.check_assumptions(scenario)
    violations = scenario_service.check_assumptions(scenario, force=True)
    assert "target_unsafe" in {v.code for v in violations}


def test_compliant_scenario_passes_assumption_checks():
    assert scenario_service.check_assumptions(scenario_service.parse_scenario(PLAN)) == []
