import numpy as np
import pytest

from noisyis.models import (
    gaussian_target,
    log_sigma,
    make_multiplicative_lognormal_noise,
    sqrt_sigma,
    uniform_target,
)

# acceptance results, printed once at the end of the session
CRITERIA: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(CRITERIA, key=lambda c: int(c[0].split()[0])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {name}: {detail}")


@pytest.fixture
def uniform():
    return uniform_target(0.1, 10.0)


@pytest.fixture
def gaussian():
    return gaussian_target(12.0)


def uniform_noise(A):
    return make_multiplicative_lognormal_noise(uniform_target(0.1, 10.0), log_sigma(A))


def gaussian_noise(A):
    return make_multiplicative_lognormal_noise(gaussian_target(12.0), sqrt_sigma(A))


def mc_moments(draws):
    """Sample mean, variance and their standard errors."""
    draws = np.asarray(draws, dtype=float)
    n = draws.size
    mean = draws.mean()
    c = draws - mean
    var = c @ c / (n - 1)
    se_mean = np.sqrt(var / n)
    se_var = np.sqrt(max(np.mean(c**4) - var**2, 0.0) / n)
    return mean, var, se_mean, se_var
