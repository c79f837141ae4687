"""Shared pytest hooks.

Acceptance tests record one verdict line per criterion through the
``acceptance_log`` fixture; the lines are printed in the terminal summary
so that they show up in every run, whatever the capture mode.
"""
import pytest

_VERDICTS: dict = {}


class AcceptanceLog:
    def record(self, number: int, status: str, detail: str):
        _VERDICTS[number] = f"criterion {number}: {status} | {detail}"


@pytest.fixture(scope="session")
def acceptance_log():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
