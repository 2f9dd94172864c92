import sys

import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo suites that take more than a few seconds")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
