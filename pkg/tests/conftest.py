import pytest

_LINES: dict[int, str] = {}


@pytest.fixture
def criterion_report():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def report(number: int, name: str, passed: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        _LINES[number] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])
