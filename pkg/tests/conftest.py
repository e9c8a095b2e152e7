import numpy as np
import pytest

from fdhom.integrands import make_surface, make_volume


@pytest.fixture
def norm_pair():
    return make_volume("iso_norm"), make_surface("iso_norm")


@pytest.fixture
def laminate_pair():
    f = make_volume("laminate", {"values": [1.0, 3.0], "cell": 1.0})
    g = make_surface("iso_norm", {"c": 2.0})
    return f, g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
