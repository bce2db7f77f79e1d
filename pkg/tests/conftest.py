import pytest

from greenlab.geometry import P1, p1_grid
from greenlab.maps import cremona, monomial_p1xp1, p2_power, quadratic_polynomial, squaring


@pytest.fixture(scope="session")
def sq():
    return squaring()


@pytest.fixture(scope="session")
def basilica():
    return quadratic_polynomial(-1)


@pytest.fixture(scope="session")
def sigma():
    return cremona()


@pytest.fixture(scope="session")
def p2sq():
    return p2_power(2)


@pytest.fixture(scope="session")
def mono21():
    return monomial_p1xp1([[2, 1], [1, 1]])


@pytest.fixture(scope="session")
def coarse():
    """Small log-polar grid for fast checks."""
    return p1_grid(128, 128)


@pytest.fixture(scope="session")
def fine():
    return p1_grid()


@pytest.fixture(scope="session")
def green_sq(sq, fine):
    from greenlab.green import green_potential

    return green_potential(sq, grid=fine)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict_line():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"AC{number:02d} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
