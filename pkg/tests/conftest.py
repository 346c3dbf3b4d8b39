"""Shared pytest hooks.

After the run, repeats the one-line verdicts collected by the acceptance
tests so they appear once, uncaptured, at the end of the session output.
"""

import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT_LINES", ()) if mod else ()
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance summary")
    for line in lines:
        terminalreporter.write_line(line)
