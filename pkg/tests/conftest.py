"""Pytest wiring: print one line per acceptance criterion at the end."""

_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _RESULTS[name] = report.outcome
    elif report.when == "setup" and report.outcome == "failed":
        _RESULTS[name] = "error"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_RESULTS):
        terminalreporter.write_line(f"{_RESULTS[name].upper():6s} {name}")
