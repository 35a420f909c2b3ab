import math

import numpy as np
import pytest

from reversim.measurement import MeasurementFamily
from reversim.operator_core import density_from_pure

THETA = math.pi / 6


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def spin_pair(theta=THETA):
    c, s = math.cos(theta), math.sin(theta)
    return MeasurementFamily(((0, np.diag([c, s])), (1, np.diag([s, c]))), completeness_declared=True)


def qubit_projectors():
    return MeasurementFamily(((0, np.diag([1.0, 0.0])), (1, np.diag([0.0, 1.0]))))


def plus_state(dim=2):
    return density_from_pure(np.full(dim, 1 / math.sqrt(dim)))
