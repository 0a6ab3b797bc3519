import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from emortal import MaterialParams  # noqa: E402

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def cu():
    return MaterialParams()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.call_report = rep


@pytest.fixture
def criterion(request):
    """Collects a detail string and records one PASS/FAIL line for the criterion."""
    number = request.node.get_closest_marker("criterion").args[0]
    details: list[str] = []
    yield details
    rep = getattr(request.node, "call_report", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    line = f"criterion {number}: {status}" + (f"  ({'; '.join(details)})" if details else "")
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
