import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fescycle.geometry import RiderGeometry  # noqa: E402
from fescycle.model import CycleRider  # noqa: E402


@pytest.fixture(scope="session")
def geo():
    return RiderGeometry()


@pytest.fixture(scope="session")
def rider():
    return CycleRider()


@pytest.fixture(scope="session")
def rider_cw():
    return CycleRider(sense=-1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
