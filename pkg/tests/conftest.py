"""Shared pytest hooks.

The acceptance tests register one summary line each; printing them from a
terminal-summary hook makes the pass/fail ledger visible in a plain
``pytest -v`` run without needing ``-s``.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
