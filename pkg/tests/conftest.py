import numpy as np
import pytest

from reluforge import geometry as geo
from reluforge.network import ReluNetwork


def dense_forward(net: ReluNetwork, X) -> np.ndarray:
    """Independent forward pass on dense matrices, one sample per row."""
    Y = np.atleast_2d(np.asarray(X, dtype=np.float64))
    for layer in net.layers:
        Y = Y @ layer.dense().T + layer.bias
        if layer.activation == "relu":
            Y = np.maximum(Y, 0.0)
    return Y


@pytest.fixture(scope="session")
def small_circle():
    """Radius-0.3 circle in R^3 with a random rotation, centered in the unit cube."""
    return geo.circle(0.3, ambient_dim=3, seed=1, offset=0.5)


@pytest.fixture(scope="session")
def unit_circle_r3():
    return geo.circle(1.0, ambient_dim=3, seed=3)


@pytest.fixture(scope="session")
def sphere_r5():
    return geo.sphere(2, 1.0, ambient_dim=5, seed=4)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one pass/fail line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
        terminalreporter.write_line(line)
