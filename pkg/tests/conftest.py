import numpy as np
import pytest

from guidance_lab.config import default_world
from guidance_lab.schedule import Schedule
from guidance_lab.world import GmmWorld


@pytest.fixture
def schedule():
    return Schedule()


@pytest.fixture
def world():
    return default_world()


@pytest.fixture
def symmetric_world():
    return GmmWorld([{"mean": (-1.0, 0.0), "std": 0.5, "prior": 0.5},
                     {"mean": (1.0, 0.0), "std": 0.5, "prior": 0.5}])


@pytest.fixture
def rng():
    return np.random.default_rng(20211208)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(LINES):
            terminalreporter.write_line(LINES[number])
