import re

import pytest

# criterion number -> detail string, filled by the acceptance tests
DETAILS: dict[int, str] = {}


@pytest.fixture
def record():
    def _record(number: int, detail: str):
        DETAILS[number] = detail

    return _record


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            m = re.search(r"test_acceptance\.py::.*test_criterion_(\d+)", rep.nodeid)
            if m and (rep.when == "call" or status == "error"):
                outcomes[int(m.group(1))] = status == "passed"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(outcomes):
        verdict = "PASS" if outcomes[number] else "FAIL"
        detail = DETAILS.get(number, "no measurement recorded")
        terminalreporter.write_line(f"{verdict} criterion {number}: {detail}")
