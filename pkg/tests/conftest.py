import pytest

from helpers import build_synthetic_kb, load_toy_kb, mock_gateway

# criterion name -> "PASS" | "FAIL", in first-seen order
_criteria: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(name): release criterion exercised by this test; the run "
        "summary prints one PASS/FAIL line per name")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call":
        _criteria[name] = "PASS" if report.passed else "FAIL"
    elif not report.passed:  # setup/teardown error counts as a failure
        _criteria.setdefault(name, "FAIL")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in _criteria.items():
        terminalreporter.write_line(f"{verdict}: {name}")


@pytest.fixture(scope="session")
def toy():
    """(kb, gateway) for the bundled ten-document corpus; treat as read-only."""
    return load_toy_kb()


@pytest.fixture(scope="session")
def synth50():
    """(kb, gateway) for the 50-chunk synthetic corpus; treat as read-only."""
    return build_synthetic_kb(50)


@pytest.fixture()
def gateway():
    return mock_gateway()
