import numpy as np
import pytest

from stablelab.geometry import slitted_rectangle, unit_disk
from stablelab.kernels import BallSpec, StableParams


@pytest.fixture
def cauchy():
    return StableParams(2, 1.0)


@pytest.fixture
def disk():
    return unit_disk()


@pytest.fixture
def slitted():
    return slitted_rectangle()


@pytest.fixture
def unit_ball():
    return BallSpec.unit(2)


def random_disk_points(seed, count, radius=0.95):
    gen = np.random.default_rng(seed)
    pts = gen.uniform(-radius, radius, (4 * count, 2))
    return pts[np.linalg.norm(pts, axis=1) < radius][:count]
