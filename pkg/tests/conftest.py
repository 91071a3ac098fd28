import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Print and record one PASS/FAIL line; returns the verdict for asserting."""

    def emit(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
