import pytest

from trafficmarl.harness.flows import reference_schedule
from trafficmarl.sim import build_grid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid6():
    return build_grid(6, 6, 150)


@pytest.fixture(scope="session")
def ref_schedule(grid6):
    return reference_schedule(grid6)


@pytest.fixture
def acceptance_report():
    def record(number: int, name: str, passed: bool, detail: str = ""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} {detail}".rstrip())
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
