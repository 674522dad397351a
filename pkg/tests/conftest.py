import sys


def pytest_terminal_summary(terminalreporter):
    """Repeat the per-criterion PASS/FAIL lines after the test log."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
