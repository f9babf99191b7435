import numpy as np
import pytest

from hmmn.encodings import EncodedInstance
from hmmn.numerics import set_dtype

ACCEPTANCE_LINES = []


def random_encoded(rng, d=4, m=3, n=2, scale=0.7, gold=None):
    return EncodedInstance(
        S=rng.normal(scale=scale, size=(d, m)),
        V=rng.normal(scale=scale, size=(d, n)),
        q=rng.normal(scale=scale, size=d),
        A=rng.normal(scale=scale, size=(d, 5)),
        gold=int(rng.integers(5)) if gold is None else gold,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _float64():
    set_dtype(np.float64)
    yield
    set_dtype(np.float64)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
