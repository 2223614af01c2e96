import sys

import numpy as np
import pytest
from hypothesis import settings

from eedset.ee_model import EeConstants

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def k():
    return EeConstants()


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def random_unit(gen, nt, m=None):
    shape = (nt,) if m is None else (nt, m)
    z = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
    return z / np.linalg.norm(z, axis=0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
