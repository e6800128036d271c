import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_results: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.failed:
        _results[key] = "FAIL"
    elif report.when == "call" and report.passed:
        _results.setdefault(key, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), verdict in sorted(_results.items()):
        terminalreporter.write_line(f"criterion {num:2d} {name.replace('_', ' '):<40} {verdict}")
