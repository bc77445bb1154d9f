import pytest

from helpers import ACCEPTANCE_LINES, make_entry


@pytest.fixture
def entry_factory():
    return make_entry


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
