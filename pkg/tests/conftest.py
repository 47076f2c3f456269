"""Shared pytest hooks: collect and print the acceptance verdict lines."""
import pytest

_VERDICTS: dict[int, str] = {}


class CriterionReport:
    def __init__(self, capsys):
        self._capsys = capsys

    def __call__(self, number: int, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        with self._capsys.disabled():
            print("\n" + line)
        return passed


@pytest.fixture
def criterion(capsys):
    return CriterionReport(capsys)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[k])
