from __future__ import annotations

import sys
from pathlib import Path

import pytest

from reward_lens.env import GridSpec

sys.path.insert(0, str(Path(__file__).parent))

STUBS = Path(__file__).parent / "stubs"

_acceptance: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one of the ten acceptance criteria")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    failed = call.excinfo is not None or _acceptance.get(number, ("PASS",))[0] == "FAIL"
    _acceptance[number] = ("FAIL" if failed else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        status, title = _acceptance[number]
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}")


@pytest.fixture
def goal_spec() -> GridSpec:
    return GridSpec(10, 10, terminal_cells=frozenset({(9, 9)}))


@pytest.fixture
def open_spec() -> GridSpec:
    return GridSpec(10, 10)
