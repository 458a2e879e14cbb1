"""Collects acceptance verdicts and prints one line per criterion after the run."""
import pytest

NUM_CRITERIA = 10
_verdicts: dict = {}


@pytest.fixture
def verdict():
    def record(number: int, passed: bool, detail: str) -> bool:
        _verdicts[number] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, NUM_CRITERIA + 1):
        passed, detail = _verdicts.get(n, (False, "not run or crashed before a verdict"))
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}")
