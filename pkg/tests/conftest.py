import logging

import numpy as np
import pytest

from cadlag_line.core.paths import PiecewisePath, from_samples
from cadlag_line.utils.project_config import SessionConfig


@pytest.fixture
def serial_session():
    """Session that samples on the calling thread."""
    return SessionConfig(cpu_workers=1, chunk_size=64)


@pytest.fixture
def parallel_session():
    return SessionConfig(cpu_workers=4, max_in_flight=3, chunk_size=7, ram_limit_gb=1e9)


@pytest.fixture
def sawtooth():
    """Piecewise-linear path on [0, 2] with jumps at 0.5 and 1.25."""
    return PiecewisePath(2.0, [0.0, 0.5, 1.25, 2.0], [0.0, 1.5, -0.25], [1.0, -0.5, 2.0], 1.25)


@pytest.fixture
def ramp():
    """Continuous non-decreasing path on [0, 1.5] with range [0, 1.8]."""
    return from_samples([0.0, 0.5, 1.0, 1.5], [0.0, 0.4, 1.2, 1.8])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def quiet_logging(caplog):
    caplog.set_level(logging.WARNING)
