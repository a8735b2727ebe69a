import math

import pytest

from pssmp import AtomMeasure, LevyTriplet

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def drift():
    return LevyTriplet(1.0, 0.0)


@pytest.fixture
def brownian():
    # Psi(lam) = lam + lam^2
    return LevyTriplet(1.0, 2.0)


@pytest.fixture
def atom_model():
    return LevyTriplet(2.0, 0.0, AtomMeasure.from_pairs([(-math.log(2.0), 1.0)]))


@pytest.fixture
def full_model():
    # atoms, diffusion and killing; Psi(1) is about 1.68
    return LevyTriplet(1.0, 0.5, AtomMeasure.from_pairs([(-0.4, 1.0), (-1.5, 0.5)]), 0.3)
