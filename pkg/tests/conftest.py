import numpy as np
import pytest

from chessmae.model import MaeConfig, MaeModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_model():
    return MaeModel(MaeConfig.toy(16), seed=3)


@pytest.fixture
def randomized_toy_model():
    """Toy model with every parameter perturbed so all paths carry signal."""
    m = MaeModel(MaeConfig.toy(16), seed=3)
    r = np.random.default_rng(7)
    for p in m.parameters():
        p.data[...] = r.normal(0, 0.3, p.shape)
    return m


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
