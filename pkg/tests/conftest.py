import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(request):
    """``record(criterion, ok, detail)``: log one PASS/FAIL line and assert on it."""
    results = request.config.stash[_RESULTS]

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        results[criterion] = line
        print(line)
        assert ok, line

    return record


def _order(key):
    num = "".join(c for c in key if c.isdigit())
    return int(num), key


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=_order):
        terminalreporter.write_line(results[key])
