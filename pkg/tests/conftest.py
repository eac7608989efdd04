"""Shared pytest fixtures; also makes ``src`` importable from any working directory."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent

if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))


@pytest.fixture(scope="session")
def scenarios_dir() -> Path:
    """Directory holding the shipped reference scenarios."""
    return REPO_ROOT / "scenarios"


@pytest.fixture
def scenario_file(tmp_path: Path):
    """Write scenario text to a temporary YAML file and return its path."""

    def write(text: str, name: str = "scenario.yaml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
