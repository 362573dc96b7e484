import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(label, passed, detail)``."""

    def _report(label: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE_LINES.append((label, bool(passed), detail))
        return bool(passed)

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
