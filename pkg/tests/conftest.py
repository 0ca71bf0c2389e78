import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from perturbscore import Binomial2, Box, Disk, MixingDistribution, MultivariateNormal, Normal, NullModel, \
    PerturbationModel  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


@pytest.fixture
def binom_fixed():
    """Binomial(2, theta) null fixed at 0.5, perturbation over [0, 1]."""
    fam = Binomial2()
    return PerturbationModel(NullModel.fixed(fam, 0.5), Box(0.0, 1.0))


@pytest.fixture
def normal_fixed():
    fam = Normal()
    return PerturbationModel(NullModel.fixed(fam, 0.0), Box(-3.0, 3.0))


@pytest.fixture
def disk_fixed():
    fam = MultivariateNormal(2)
    return PerturbationModel(NullModel.fixed(fam, [0.0, 0.0]), Disk(2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_normal_null(estimate="none"):
    return NullModel(Normal(), MixingDistribution([-2.0, 2.0], [0.5, 0.5]), estimate)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line; it is printed now and again in the run summary."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        print(line)
        _VERDICTS.append(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
