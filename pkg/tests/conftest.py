import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from htnet.graph import complete_graph, cycle_graph, path_graph, star_graph  # noqa: E402

GRID_GRAPHS = {
    "path-4": path_graph(4),
    "star-4": star_graph(4),
    "cycle-5": cycle_graph(5),
    "complete-4": complete_graph(4),
}


@pytest.fixture
def single_edge():
    return path_graph(2)


# acceptance reporting ---------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ok = report.outcome == "passed"
        prev = _CRITERIA.get(number, (True, title))
        _CRITERIA[number] = (prev[0] and ok, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, title = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
