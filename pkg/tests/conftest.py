import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def frobenius_sq(grid, e):
    """L2 norm squared (Frobenius) of a flat engineering strain array."""
    w = np.array([1, 1, 1, 0.5, 0.5, 0.5])
    return float(np.sum(grid.weights[:, None] * e * e * w))


def dense_contraction(L, G):
    """Q(G) by explicit index loops over the full tensor."""
    T = L.tensor()
    q = 0.0
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    q += T[i, j, k, l] * G[k, l] * G[i, j]
    return q


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
