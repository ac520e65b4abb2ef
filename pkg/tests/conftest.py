import numpy as np
import pytest

from sqgnoise.spectral import GevreyParams, SpectralGrid

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


@pytest.fixture
def grid16():
    return SpectralGrid(16)


@pytest.fixture
def grid8():
    return SpectralGrid(8)


@pytest.fixture
def loose():
    """s = 1/2, sigma = 3/2: outside the theorem's sigma interval but the workhorse test setting."""
    return GevreyParams(nu=1.0, s=0.5, sigma=1.5, alpha=1.0, beta=0.25, epsilon=0.1, strict=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
