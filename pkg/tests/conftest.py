import pytest

_LINES = []


@pytest.fixture
def report():
    """Collects one summary line per acceptance criterion."""
    def add(n, ok, detail):
        _LINES.append(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
