import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def smooth_random_gf(rng, omega, n_terms=4, scale=1.0):
    """Sum of random Lorentzian poles in the lower half plane: smooth, bounded, complex."""
    poles = rng.uniform(omega.min(), omega.max(), n_terms)
    widths = rng.uniform(0.2, 1.0, n_terms)
    weights = rng.uniform(0.1, 1.0, n_terms) * scale
    return (weights[None, :] / (omega[:, None] - poles[None, :] + 1j * widths[None, :])).sum(axis=1)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> str:
    line = f"acceptance {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
