#!/usr/bin/env python3
"""Load every scenario in a directory and report parse errors and assumption violations."""

import logging
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.services.scenario_service import scenario_service  # noqa: E402
from src.shared.exceptions import ScenarioError  # noqa: E402
from src.shared.logging import setup_logging  # noqa: E402


def main() -> None:
    """Check the scenarios under the given directory (default: ``scenarios/``)."""
    setup_logging()
    logger = logging.getLogger(__name__)

    directory = Path(sys.argv[1]) if len(sys.argv) > 1 else project_root / "scenarios"
    files = sorted(directory.glob("*.yaml"))
    logger.info(f"Checking {len(files)} scenario file(s) in {directory}")

    failures = 0
    for path in files:
        try:
            scenario = scenario_service.load_scenario(path)
            violations = scenario_service.check_assumptions(scenario, force=True)
        except ScenarioError as e:
            failures += 1
            logger.error(f"❌ {path.name}: {e.user_message}")
            continue
        if violations:
            failures += 1
            codes = ", ".join(v.code for v in violations)
            logger.error(f"❌ {path.name} ({scenario.mode}): {codes}")
        else:
            logger.info(f"✅ {path.name} ({scenario.mode})")

    if failures:
        logger.error(f"{failures} of {len(files)} scenario(s) failed")
        sys.exit(1)


if __name__ == "__main__":
    main()
