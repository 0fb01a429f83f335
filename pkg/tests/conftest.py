"""Shared pytest hooks: per-criterion verdict lines for the acceptance suite."""
import re

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")
_results: dict = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = _CRITERION_RE.search(report.nodeid)
    if match:
        _results[int(match.group(1))] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        verdict = "PASS" if _results[number] else "FAIL"
        terminalreporter.write_line(f"CRITERION {number}: {verdict}")
