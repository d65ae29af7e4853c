import numpy as np
import pytest

from rumspec import gallery
from rumspec.symbol import assemble_transfer_function


@pytest.fixture(scope="session")
def fws():
    return {name: gallery.get(name) for name in gallery.names()}


@pytest.fixture(scope="session")
def symbols(fws):
    return {name: assemble_transfer_function(fw) for name, fw in fws.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA: dict[int, str] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    n = int(name.split("_")[2])
    if report.when == "call" or report.failed:
        if report.failed:
            _CRITERIA[n] = "FAIL"
        else:
            _CRITERIA.setdefault(n, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {n}: {_CRITERIA[n]}")
