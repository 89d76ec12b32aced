import pytest

_LINES: list[str] = []


@pytest.fixture
def report_line():
    """Record one acceptance verdict; all verdicts are repeated in the terminal summary."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        print(line)
        _LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
