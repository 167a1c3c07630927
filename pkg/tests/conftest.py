import numpy as np
import pytest

from spikelasso.events import BinaryProcessMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pair(rng, n_bins, n_neurons, p_x=0.2, p_y=0.2):
    """Random spike/event matrices with at least one event and one non-event."""
    while True:
        x = (rng.random((n_bins, n_neurons)) < p_x).astype(np.int8)
        y = (rng.random((n_bins, n_neurons)) < p_y).astype(np.int8)
        if 0 < y.sum() < y.size:
            return (BinaryProcessMatrix(1.0, x, "spike"),
                    BinaryProcessMatrix(1.0, y, "event"))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
