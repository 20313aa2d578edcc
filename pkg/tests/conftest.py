import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def criterion(request):
    """Attach a one-line summary to the running acceptance test."""
    details = []
    request.node.stash[_LINES_KEY] = details
    return details.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call" or item.get_closest_marker("acceptance") is None:
        return
    details = item.stash.get(_LINES_KEY, [])
    status = "PASS" if report.passed else "FAIL"
    line = f"{status} {item.name}"
    if details:
        line += ": " + "; ".join(details)
    item.config.stash[_LINES_KEY].append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
