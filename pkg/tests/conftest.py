from __future__ import annotations

import math

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# one turn of the example in whole steps, divisible by 3 so a third of a turn is on the grid
TURN_DT = 2 * math.pi / 6000

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Append one acceptance line; the summary is printed at the end of the run."""

    def _record(criterion: int, ok: bool, text: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {text}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
