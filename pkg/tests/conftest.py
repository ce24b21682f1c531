import pytest

from capreg import TimeGrid, reference_market

_acceptance_outcomes: dict[str, str] = {}


@pytest.fixture(scope="session")
def spec_m():
    return reference_market("M")


@pytest.fixture(scope="session")
def spec_c():
    return reference_market("C")


@pytest.fixture(scope="session")
def grid_unit():
    """Weekly grid over ten years with kappa = 1 (hand-calculation scale)."""
    return TimeGrid.from_dt(10.0, 1.0 / 52.0, kappa=1.0)


@pytest.fixture(scope="session")
def grid_ref():
    """Weekly grid over ten years with the documented energy scale kappa = 168."""
    return TimeGrid.from_dt(10.0, 1.0 / 52.0, kappa=168.0)


@pytest.fixture(scope="session")
def grid_coarse():
    """Quick grid for tests whose assertions do not depend on resolution."""
    return TimeGrid.from_dt(10.0, 0.1, kappa=168.0)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance.py::test_criterion" in report.nodeid:
        _acceptance_outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(_acceptance_outcomes):
        name = nodeid.split("::")[-1]
        outcome = _acceptance_outcomes[nodeid]
        terminalreporter.write_line(f"{name}: {'PASS' if outcome == 'passed' else outcome.upper()}")
