import sys

import numpy as np
import pytest

from mhsm.geometry import Transform2
from mhsm.simulate import Environment, SensorModel, simulate_sequence


def room_pair(step: Transform2, noise: float = 0.0, seed: int = 0):
    """(current, reference, truth) for one step inside the default room."""
    seq = simulate_sequence([step], Environment.rectangle(), SensorModel(noise_std=noise, rng_seed=seed))
    return seq.scans[1].to_cartesian(), seq.scans[0].to_cartesian(), step


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[n])
