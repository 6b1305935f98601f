"""Shared pytest configuration.

Prints one PASS/FAIL line per acceptance criterion when the acceptance
module runs, so the gate's outcome is readable straight off the log.
"""


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    verdict = "PASS" if report.passed else "FAIL"
    name = report.nodeid.split("::")[-1]
    print(f"\n[acceptance] {verdict}: {name} ({report.duration:.1f}s)")
