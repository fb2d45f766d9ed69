ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
