"""Collects outcomes of tests tagged with ``@pytest.mark.criterion`` into one line per criterion."""

from collections import OrderedDict

import pytest

_criteria = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _criteria.setdefault(number, {"title": title, "outcomes": {}})
            _criteria[number]["outcomes"][item.nodeid] = "not run"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _criteria[mark.args[0]]["outcomes"]
    if report.when == "call" or report.failed or report.skipped:
        if report.failed:
            entry[item.nodeid] = "failed"
        elif report.skipped:
            entry[item.nodeid] = "skipped"
        elif entry[item.nodeid] != "failed":
            entry[item.nodeid] = "passed"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        c = _criteria[number]
        states = set(c["outcomes"].values())
        verdict = "PASS" if states == {"passed"} else "FAIL"
        terminalreporter.write_line(f"criterion {number} [PRIMARY] {c['title']}: {verdict}")
