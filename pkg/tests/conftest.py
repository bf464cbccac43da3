import numpy as np
import pytest

from lockinfer.lockmodel import PADLOCK, SAFE
from lockinfer.synth import calibrated_profile


@pytest.fixture(scope="session")
def padlock_profile():
    return calibrated_profile(PADLOCK)


@pytest.fixture(scope="session")
def safe_profile():
    return calibrated_profile(SAFE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
