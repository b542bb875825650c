"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion this test decides")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = dict(item.user_properties).get("detail", "")
        _RESULTS.setdefault(marker.args[0], []).append((report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_RESULTS, key=lambda s: (int("".join(c for c in s if c.isdigit())), s)):
        runs = _RESULTS[label]
        status = "PASS" if all(ok for ok, _ in runs) else "FAIL"
        detail = "; ".join(d for _, d in runs if d)
        terminalreporter.write_line(f"criterion {label:<4} {status}  {detail}")
