"""Shared fixtures for the test suite."""

import pytest


@pytest.fixture
def acceptance_report(request):
    """Record and print one [PASS]/[FAIL] line, then assert.

    Lines are also replayed in the terminal summary so they are visible
    without -s.
    """

    def _report(name: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        print(line)
        lines = getattr(request.config, "_acceptance_lines", None)
        if lines is None:
            lines = []
            request.config._acceptance_lines = lines
        lines.append(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance checks")
        for line in lines:
            terminalreporter.write_line(line)
