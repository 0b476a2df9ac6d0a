import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stiefel(rng, d, r):
    q, _ = np.linalg.qr(rng.standard_normal((d, r)))
    return q


def random_skew(rng, r, scale=1.0):
    a = scale * rng.standard_normal((r, r))
    return a - a.T


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
