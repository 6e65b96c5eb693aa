"""Shared test plumbing.

The acceptance tests record a one-line verdict each; the hook below prints
them in the terminal summary so the lines survive pytest's output capture.
"""

ACCEPTANCE_LINES: list[str] = []


def record_verdict(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
