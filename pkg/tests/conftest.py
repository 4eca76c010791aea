import numpy as np
import pytest

from stalker_sim.rng import RngStream


@pytest.fixture
def stream():
    return RngStream(20240611)


def binom_ci(n, p, z=3.0):
    """Half-width of a ``z``-sigma binomial interval."""
    return z * np.sqrt(p * (1 - p) / n)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
