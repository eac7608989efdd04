"""Tests for the command-line entry point and its exit codes."""

from pathlib import Path

import pytest

from src.main import build_parser, main, run_sweep, sweep_dir_name
from src.services.scenario_service import scenario_service
from src.services.simulation_service import RunOptions
from src.shared.constants import EXIT_OK, EXIT_TIMEOUT, EXIT_VALIDATION

SCENARIO = """\
mode: plan2d
seed: 2
world:
  bounds: [0.0, 0.0, 6.0, 4.0]
robots:
  - start: [1.0, 2.0, 0.0]
    target: [5.0, 2.0]
    v: 0.5
    u_max: 2.0
planner:
  delta: 0.3
  safety_margin: 0.5
"""


@pytest.mark.slow
def test_run_reaches_target_and_writes_artifacts(tmp_path: Path, scenario_file):
    out = tmp_path / "out"
    assert main(["run", str(scenario_file(SCENARIO)), "--out", str(out)]) == EXIT_OK
    assert (out / "metrics.txt").read_text().startswith("status: reached\n")
    assert (out / "plot.svg").exists()
    assert (out / "path_0.csv").exists()


def test_step_cap_maps_to_timeout_exit(tmp_path: Path, scenario_file):
    text = SCENARIO.replace("seed: 2\n", "seed: 2\nstep_cap: 2\n")
    assert main(["run", str(scenario_file(text)), "--out", str(tmp_path / "out")]) == EXIT_TIMEOUT


def test_invalid_scenario_exits_with_validation_code(tmp_path: Path, scenario_file, capsys: pytest.CaptureFixture[str]):
    text = SCENARIO.replace("seed: 2\n", "seed: 2\nspeed: 9\n")
    assert main(["run", str(scenario_file(text)), "--out", str(tmp_path / "out")]) == EXIT_VALIDATION
    assert "error: line 3:" in capsys.readouterr().err


def test_assumption_violation_needs_force(tmp_path: Path, scenario_file):
    text = SCENARIO.replace("seed: 2\n", "seed: 2\nstep_cap: 2\n") + "  v_max: 0.6\n"
    path = str(scenario_file(text))
    assert main(["run", path, "--out", str(tmp_path / "a")]) == EXIT_VALIDATION
    assert main(["run", path, "--out", str(tmp_path / "b"), "--force"]) == EXIT_TIMEOUT


def test_branch_probability_sweep_needs_an_explorer(tmp_path: Path, scenario_file):
    args = ["sweep", str(scenario_file(SCENARIO)), "--q0", "0.3", "--out", str(tmp_path / "out")]
    assert main(args) == EXIT_VALIDATION


@pytest.mark.slow
def test_sweep_writes_a_summary_row_per_run(tmp_path: Path, scenario_file):
    text = SCENARIO.replace("seed: 2\n", "seed: 2\nstep_cap: 2\n")
    out = tmp_path / "sweep"
    code = main(["sweep", str(scenario_file(text)), "--seeds", "1", "2", "--workers", "2", "--out", str(out)])
    assert code == EXIT_TIMEOUT
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "seed,q0,status,completed,t_f,steps"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
    assert (out / sweep_dir_name(1, None) / "metrics.txt").exists()


def test_sweep_directory_names():
    assert sweep_dir_name(3, None) == "seed3_qnone"
    assert sweep_dir_name(3, 0.25) == "seed3_q0.25"


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


@pytest.mark.slow
@pytest.mark.asyncio
async def test_run_sweep_returns_rows_in_grid_order(tmp_path: Path):
    scenario = scenario_service.parse_scenario(SCENARIO.replace("seed: 2\n", "seed: 2\nstep_cap: 2\n"))
    rows = await run_sweep(scenario, [4, 3], [None], tmp_path, RunOptions(), workers=1)
    assert [row.seed for row in rows] == [4, 3]
    assert all(row.status == "timeout" and row.steps == 2 for row in rows)
