import pytest

# criterion lines collected by test_acceptance.py, echoed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion():
    def record(number, name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} {name}: {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
