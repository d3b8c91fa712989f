import functools

import pytest

from critfield.critical import manifold_critical_points
from critfield.scenarios import get_scenario


@functools.lru_cache(maxsize=None)
def scenario(shape):
    return get_scenario(shape)


@functools.lru_cache(maxsize=None)
def critical_set(shape):
    return manifold_critical_points(scenario(shape))


@pytest.fixture(scope="session")
def ellipse():
    return scenario("ellipse:2,1")


@pytest.fixture(scope="session")
def ellipse_cs():
    return critical_set("ellipse:2,1")


@pytest.fixture(scope="session")
def cubic():
    return scenario("paper_cubic")


@pytest.fixture(scope="session")
def cubic_cs():
    return critical_set("paper_cubic")


@pytest.fixture(scope="session")
def cubic_z0(cubic_cs):
    return cubic_cs.within((0.0, 0.0), 0.5)[0]


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    rep = outcome.get_result()
    key = (marker.args[0], marker.args[1])
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        ok = rep.passed
        _ACCEPTANCE[key] = _ACCEPTANCE.get(key, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), ok in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {num:2d} {title}: {'PASS' if ok else 'FAIL'}")
