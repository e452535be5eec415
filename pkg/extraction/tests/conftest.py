"""Collects acceptance verdict lines and replays them after the run.

pytest's fd-level capture swallows even direct writes to sys.__stdout__,
so the verdicts are buffered here and emitted from a terminal-summary hook.
"""

acceptance_verdicts: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_verdicts:
        return
    terminalreporter.section("acceptance verdicts")
    for line in acceptance_verdicts:
        terminalreporter.write_line(line)
