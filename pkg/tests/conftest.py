import sys

import pytest

from adaptq.configs import ConfigTable, Configuration, CostProfile

# go/no-go verdict lines collected by the acceptance suite; echoed in the
# terminal summary so they survive output capture into batch logs
ACCEPTANCE_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def emit(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_VERDICTS.append(line)
        sys.__stdout__.write(line + "\n")
        sys.__stdout__.flush()
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.ensure_newline()
        terminalreporter.section("acceptance verdicts")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def two_table() -> ConfigTable:
    """Fast inaccurate config A (span 16) vs slow accurate config B (span 8)."""
    return ConfigTable(
        [
            (Configuration(100, 4, 4), CostProfile(1000.0, 0.90, 0.990)),
            (Configuration(300, 4, 2), CostProfile(25.0, 0.95, 0.995)),
        ]
    )


@pytest.fixture
def perfect_table() -> ConfigTable:
    """Noise-free profiles: predictions always equal the window label."""
    return ConfigTable(
        [
            (Configuration(100, 4, 4), CostProfile(1000.0, 1.0, 1.0)),
            (Configuration(200, 4, 2), CostProfile(200.0, 1.0, 1.0)),
            (Configuration(300, 4, 1), CostProfile(25.0, 1.0, 1.0)),
        ]
    )
