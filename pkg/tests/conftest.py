import re

import pytest

# lines recorded by the acceptance tests, echoed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    def record(number, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(re.match(r"criterion (\d+)", s).group(1))):
            terminalreporter.write_line(line)
