"""Shared pytest plumbing.

The acceptance tests record one verdict line per criterion; the hook
below replays them in the terminal summary so the gate status is
readable without digging through individual test output.
"""

import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance(request):
    def record(name: str, ok: bool, detail: str):
        verdict = "PASS" if ok else "FAIL"
        request.config._acceptance_lines.append(f"{verdict}  {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
