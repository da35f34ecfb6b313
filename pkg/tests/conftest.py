import numpy as np
import pytest

from gauge_killing.catalog import get_example

ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def hopf():
    return get_example("hopf")


@pytest.fixture(scope="session")
def frame():
    return get_example("frame-s2")


@pytest.fixture(scope="session")
def su2box():
    return get_example("su2-box")


@pytest.fixture
def acceptance(request):
    """``record(number, title, ok, detail)``: log one acceptance line."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(number, title, ok, detail=""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
        ACCEPTANCE[number] = line
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
