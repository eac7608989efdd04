"""Tests for the log formatters and run context tagging."""

import json
import logging

from src.shared.logging import JSONFormatter, RunContextFilter, TextFormatter, run_context


def _record(**extra) -> logging.LogRecord:
    record = logging.makeLogRecord(
        {"name": "src.test", "levelname": "INFO", "levelno": logging.INFO, "msg": "step %d", "args": (7,)}
    )
    record.__dict__.update(extra)
    RunContextFilter().filter(record)
    return record


def test_json_lines_carry_run_fields_and_extras():
    with run_context(seed=3, q0="0.5"):
        record = _record(steps=12)
    entry = json.loads(JSONFormatter().format(record))
    assert entry["message"] == "step 7"
    assert entry["seed"] == 3
    assert entry["q0"] == "0.5"
    assert entry["steps"] == 12
    assert "run" not in entry


def test_text_tag_appears_only_inside_a_run():
    formatter = TextFormatter()
    assert " - INFO - step 7" in formatter.format(_record())
    with run_context(seed=3):
        record = _record()
    assert " - INFO [seed=3] - step 7" in formatter.format(record)


def test_nested_contexts_merge_and_unwind():
    with run_context(scenario="plan2d"):
        with run_context(seed=1):
            inner = _record().run
        outer = _record().run
    assert inner == {"scenario": "plan2d", "seed": 1}
    assert outer == {"scenario": "plan2d"}
    assert _record().run == {}
