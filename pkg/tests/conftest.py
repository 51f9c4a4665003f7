import pytest

_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, text)`` records and prints one acceptance line."""
    def record(n: int, ok: bool, text: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {text}"
        _LINES[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
