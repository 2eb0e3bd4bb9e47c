import numpy as np
import pytest

from candidefit.model import load_defaults


@pytest.fixture(scope="session")
def defaults():
    return load_defaults()


@pytest.fixture(scope="session")
def model(defaults):
    return defaults[0]


@pytest.fixture(scope="session")
def corr(defaults):
    return defaults[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance  # noqa: F401  (module may not have run)
    lines = test_acceptance.RESULTS
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
