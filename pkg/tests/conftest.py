import pytest

VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def record_verdict(request):
    """Store a pass/fail line for one acceptance criterion."""
    store = request.config.stash.setdefault(VERDICTS, {})

    def record(number, title, ok, detail=""):
        store[number] = (title, bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        title, ok, detail = store[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d} {title}: {detail}")
