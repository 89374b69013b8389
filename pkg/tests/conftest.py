import numpy as np
import pytest

from l2plus.fixtures import first_order_lag, siso_benchmark, two_input_benchmark


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def siso():
    return siso_benchmark()


@pytest.fixture(scope="session")
def mimo():
    return two_input_benchmark()


@pytest.fixture(scope="session")
def lag():
    return first_order_lag()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
