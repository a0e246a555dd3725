"""Shared fixtures; collects acceptance-criterion verdicts for the summary."""

import pytest

_CRITERIA = []


@pytest.fixture
def criterion_report():
    """Record a named acceptance-criterion verdict.

    Tests call report(name, passed, detail) before asserting, so the
    terminal summary shows one pass/fail line per criterion even when the
    backing test fails.
    """

    def report(name: str, passed: bool, detail: str = "") -> None:
        _CRITERIA.append((name, bool(passed), detail))

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
