"""Command-line entry point: single runs and parameter sweeps."""

import argparse
import asyncio
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import NamedTuple

from src.config import config
from src.models.metrics import RunStatus
from src.models.scenario import Scenario
from src.services.output_service import output_service
from src.services.scenario_service import scenario_service
from src.services.simulation_service import RunOptions, simulation_service
from src.shared.constants import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_TIMEOUT,
    EXIT_VALIDATION,
    SWEEP_SUMMARY_FILE,
)
from src.shared.exceptions import NavigationError, ScenarioError
from src.shared.logging import run_context, setup_logging

logger = logging.getLogger(__name__)

STATUS_EXIT_CODES = {
    RunStatus.REACHED: EXIT_OK,
    RunStatus.COMPLETED: EXIT_OK,
    RunStatus.FAILED: EXIT_FAILURE,
    RunStatus.TIMEOUT: EXIT_TIMEOUT,
}


class SweepRow(NamedTuple):
    seed: int
    q0: float | None
    status: str
    completed: bool
    completion_time: float | None
    steps: int


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensornet-nav",
        description="Simulate robot path planning, sensor-network navigation and safe exploration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("scenario", type=Path, help="Scenario YAML file")
        p.add_argument("--out", help="Output directory (overrides OUTPUT_DIR and the scenario)")
        p.add_argument("--force", action="store_true", help="Run despite assumption violations")
        p.add_argument("--fast-candidates", action="store_true", help="Relax only the shortest raw candidate")
        p.add_argument("--smooth-control", action="store_true", help="Bounded-slope switch in sliding-mode laws")

    run = sub.add_parser("run", help="Run one scenario")
    common(run)
    run.add_argument("--seed", type=int, help="Override the scenario seed")

    sweep = sub.add_parser("sweep", help="Run every (seed, q0) combination in parallel")
    common(sweep)
    sweep.add_argument("--seeds", type=int, nargs="+", help="Seeds to run (default: the scenario seed)")
    sweep.add_argument("--q0", type=float, nargs="+", help="Branch probabilities to run (exploration only)")
    sweep.add_argument("--workers", type=int, default=None, help="Parallel workers (default from config)")
    return parser


def _options(args: argparse.Namespace) -> RunOptions:
    return RunOptions(fast_candidates=args.fast_candidates, smooth_control=args.smooth_control)


def _load(args: argparse.Namespace) -> Scenario:
    scenario = scenario_service.load_scenario(args.scenario)
    scenario_service.check_assumptions(scenario, force=args.force)
    return scenario


def run_command(args: argparse.Namespace) -> int:
    """Run one scenario and write its artifacts; returns the exit code."""
    scenario = _load(args)
    if args.seed is not None:
        scenario = scenario_service.with_overrides(scenario, seed=args.seed)
    with run_context(scenario=args.scenario.stem, seed=scenario.seed):
        outcome = simulation_service.run_scenario(scenario, _options(args))
        directory = output_service.resolve_output_dir(args.out, scenario.output_dir)
        output_service.emit_outputs(outcome.metrics, outcome.artifacts, directory)
        if outcome.metrics.failure:
            logger.error(f"Run failed: {outcome.metrics.failure}")
    return STATUS_EXIT_CODES[outcome.metrics.status]


# ------------------------------------------------------------------
# Sweep
# ------------------------------------------------------------------


def _sweep_worker_init() -> None:
    setup_logging()


def sweep_job(text: str, seed: int, q0: float | None, directory: str, options: RunOptions) -> SweepRow:
    """One sweep run in a worker process; the scenario travels as YAML text."""
    scenario = scenario_service.parse_scenario(text, f"sweep seed={seed}")
    scenario = scenario_service.with_overrides(scenario, seed=seed, q0=q0)
    with run_context(seed=seed, q0="none" if q0 is None else f"{q0:g}"):
        outcome = simulation_service.run_scenario(scenario, options)
        output_service.emit_outputs(outcome.metrics, outcome.artifacts, directory)
    m = outcome.metrics
    used_q0 = scenario.explorer.q0 if scenario.explorer is not None else None
    return SweepRow(seed, used_q0, m.status.value, m.reached, m.completion_time, m.steps)


def sweep_dir_name(seed: int, q0: float | None) -> str:
    return f"seed{seed}_q{'none' if q0 is None else f'{q0:g}'}"


async def run_sweep(
    scenario: Scenario,
    seeds: list[int],
    q0s: list[float | None],
    root: Path,
    options: RunOptions,
    workers: int,
) -> list[SweepRow]:
    """Fan the (seed, q0) grid out over a process pool; rows come back in grid order."""
    text = scenario_service.dump_scenario(scenario)
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers, initializer=_sweep_worker_init) as pool:
        jobs = [
            loop.run_in_executor(pool, sweep_job, text, seed, q0, str(root / sweep_dir_name(seed, q0)), options)
            for seed in seeds
            for q0 in q0s
        ]
        logger.info(f"Sweep started: {len(jobs)} run(s) on {workers} worker(s)")
        return list(await asyncio.gather(*jobs))


def write_sweep_summary(rows: list[SweepRow], target: Path) -> Path:
    with target.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["seed", "q0", "status", "completed", "t_f", "steps"])
        for row in rows:
            writer.writerow(
                [
                    row.seed,
                    "" if row.q0 is None else f"{row.q0:g}",
                    row.status,
                    str(row.completed).lower(),
                    "" if row.completion_time is None else f"{row.completion_time:.6f}",
                    row.steps,
                ]
            )
    return target


def sweep_command(args: argparse.Namespace) -> int:
    """Run the sweep grid and write the summary; returns the worst exit code."""
    scenario = _load(args)
    seeds = args.seeds or [scenario.seed]
    q0s: list[float | None] = list(args.q0) if args.q0 else [None]
    if args.q0 and scenario.explorer is None:
        raise ScenarioError(f"--q0 only applies to exploration scenarios, not {scenario.mode}")
    root = output_service.resolve_output_dir(args.out, scenario.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    workers = args.workers or config.sweep_workers

    rows = asyncio.run(run_sweep(scenario, seeds, q0s, root, _options(args), workers))
    write_sweep_summary(rows, root / SWEEP_SUMMARY_FILE)
    done = sum(r.completed for r in rows)
    logger.info(f"Sweep finished: {done}/{len(rows)} run(s) reached or completed")
    codes = [STATUS_EXIT_CODES[RunStatus(r.status)] for r in rows]
    if EXIT_FAILURE in codes:
        return EXIT_FAILURE
    return max(codes, default=EXIT_OK)


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run the command and map the outcome to an exit code."""
    args = build_parser().parse_args(argv)
    setup_logging()
    logger.info("=" * 60)
    logger.info(f"sensornet-nav {args.command} {args.scenario}")
    logger.info("=" * 60)
    commands = {"run": run_command, "sweep": sweep_command}
    try:
        return commands[args.command](args)
    except ScenarioError as e:
        logger.error(f"Scenario rejected: {e}")
        print(f"error: {e.user_message}", file=sys.stderr)
        return EXIT_VALIDATION
    except NavigationError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e.user_message}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_FAILURE


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    try:
        cli()
    except KeyboardInterrupt:
        logger.info("Received keyboard interrupt")
        sys.exit(EXIT_FAILURE)
