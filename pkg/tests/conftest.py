import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """``record(number, ok, detail)``: one status line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])
