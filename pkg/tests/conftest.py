import pytest

N_CRITERIA = 10
_LINES = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(k, ok, detail)``; returns ``ok``."""
    lines = request.config.stash.setdefault(_LINES, {})

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(lines.get(k, f"criterion {k:2d}: NO RESULT  (not run, or errored before reporting)"))
