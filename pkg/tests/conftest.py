"""Per-criterion PASS/FAIL summary for the acceptance suite."""

import re

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_outcomes: dict[int, bool] = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    n = int(match.group(1))
    ok = _outcomes.get(n, True)
    if report.failed or hasattr(report, "wasxfail"):
        ok = False
    elif report.skipped and report.when != "teardown":
        ok = False
    _outcomes[n] = ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if _outcomes[n] else 'FAIL'}")
