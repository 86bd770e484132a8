import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion():
    """Record one acceptance line; printed together at the end of the session."""

    def record(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
