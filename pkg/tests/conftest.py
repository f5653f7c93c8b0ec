"""Collects ``acceptance`` markers and prints one PASS/FAIL line per criterion."""

from collections import OrderedDict

import pytest

_CRITERIA = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test belongs to an acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "failed": [], "passed": 0})
    # a failure in any phase fails the criterion; a pass is counted on the call phase
    if call.excinfo is None:
        if call.when == "call":
            entry["passed"] += 1
    elif not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        ok = not entry["failed"] and entry["passed"] > 0
        status = "PASS" if ok else "FAIL"
        if ok:
            detail = f"{entry['passed']} test(s) passed"
        elif entry["failed"]:
            detail = "failed: " + ", ".join(entry["failed"])
        else:
            detail = "not run"
        terminalreporter.write_line(f"[{status}] criterion {number}: {entry['title']} ({detail})")
