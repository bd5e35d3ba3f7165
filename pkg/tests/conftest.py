import numpy as np
import pytest

from snlslab.spectral import GridSpec, SpectralField


def random_field(grid: GridSpec, rng: np.random.Generator) -> SpectralField:
    z = rng.standard_normal((2,) + grid.shape)
    return SpectralField(grid, z[0] + 1j * z[1])


def smooth_random_field(grid: GridSpec, rng: np.random.Generator, decay: float = 2.0) -> SpectralField:
    """Random coefficients damped like <xi>^-decay, so the field is smooth."""
    z = rng.standard_normal((2,) + grid.shape)
    return SpectralField(grid, (z[0] + 1j * z[1]) * grid.bracket(-decay), "frequency")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
