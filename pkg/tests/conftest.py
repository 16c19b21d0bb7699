import numpy as np
import pytest

from dobotc import constant_reference, wafer_plant

WEIGHT_SETS = [(5.0, 5.0), (10.0, 2.5), (10.0, 5.0)]


@pytest.fixture(scope="session")
def plant():
    return wafer_plant()


@pytest.fixture(scope="session")
def ref():
    return constant_reference(166.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def report(request):
    """Record a one-line detail for an acceptance criterion."""
    name = request.node.name

    def _report(detail):
        _CRITERIA[name] = detail
        print(f"{name}: {detail}")

    return _report


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _CRITERIA.setdefault(name, "")
        _CRITERIA[name] = ("PASS" if report.passed else "FAIL", _CRITERIA[name])


def pytest_terminal_summary(terminalreporter):
    rows = [(k, v) for k, v in _CRITERIA.items() if isinstance(v, tuple)]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in rows:
        terminalreporter.write_line(f"{status}  {name}  {detail}")
