import numpy as np
import pytest

from sharpot.sinkhorn import SinkhornConfig

# acceptance outcomes, printed once at the end of the session
ACCEPTANCE_LINES = []


def random_histogram(rng, n, low=0.1):
    p = rng.uniform(low, 1.0, n)
    return p / p.sum()


def random_instance(rng, n, m):
    return random_histogram(rng, n), random_histogram(rng, m), rng.uniform(0.0, 1.0, (n, m))


def tight_config(lam):
    return SinkhornConfig(lam=lam, max_iter=200000, marginal_tol=1e-14)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
