from __future__ import annotations

import numpy as np
import pytest

from asyncdual import PowerDecay, RunConfig, Synchronous, quadratic_consensus, run


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile (or load cached) numba kernels once so timings measure runs."""
    problem = quadratic_consensus([0.0, 3.0, 6.0])
    run(RunConfig(problem, Synchronous(), PowerDecay(0.15, 0.51), 8, channels=("lambda", "witness", "Q")))


@pytest.fixture
def path3():
    return quadratic_consensus([0.0, 3.0, 6.0])


@pytest.fixture
def lam_star():
    return np.array([-3.0, -3.0])


# one PASS/FAIL line per acceptance criterion, printed after the run
_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = getattr(item, "criterion_detail", "")
    _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
