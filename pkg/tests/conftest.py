import os

# TIDALDRAG_EXTENDED=1 adds the dx = 20 and 16 m points to the acceptance sweeps
EXTENDED = os.environ.get("TIDALDRAG_EXTENDED") == "1"

# one line per acceptance criterion, printed after the run
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda text: int(text.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
