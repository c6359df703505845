"""Shared pytest plumbing: acceptance results are echoed in the terminal summary."""

import pytest

_RESULTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def acceptance():
    """``acceptance(n, passed, detail)`` records one criterion outcome."""

    def record(number: int, passed: bool, detail: str) -> None:
        _RESULTS.append((number, bool(passed), detail))
        print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} ({detail})")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
