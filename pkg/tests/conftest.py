import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the terminal summary, then assert."""
    lines = request.config.stash.setdefault(_LINES, [])

    def report(number, ok, detail):
        lines.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(lines[-1])
        assert ok, detail

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
