import math

import pytest

from crip.spins import FullSpace, HalfSpaceAboveSurface, NvProbe, TargetEnsemble, get_species

AXIS_100 = (math.sin(math.acos(1 / math.sqrt(3))), 0.0, 1 / math.sqrt(3))


@pytest.fixture
def c13():
    return get_species("13C")


@pytest.fixture
def h1():
    return get_species("1H")


@pytest.fixture
def probe():
    return NvProbe()


@pytest.fixture
def diamond(c13):
    return TargetEnsemble(c13, 1.94, 0.0335, 0.0, FullSpace())


@pytest.fixture
def pmma(h1):
    return TargetEnsemble(h1, 57.0, 781.0, 1.0, HalfSpaceAboveSurface())


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
