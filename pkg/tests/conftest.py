import itertools

import numpy as np
import pytest

from bellcert import devices

# (gA, gB, padA, padB) grid used by the positive family; side dims up to 11
FAMILY_PARAMS = [
    (ga, gb, pa, pb)
    for ga, gb, pa, pb in itertools.product((1, 2, 3, 4), (1, 2, 3, 4), (0, 1, 2, 3), (0, 1, 2, 3))
    if (ga + gb + pa + pb) % 5 == 0 or (ga, gb, pa, pb) in {(1, 1, 0, 0), (4, 4, 3, 3)}
]


def family(n, offset=0):
    """n seeded scrambled devices cycling through FAMILY_PARAMS."""
    out = []
    for k in range(n):
        ga, gb, pa, pb = FAMILY_PARAMS[(k * 7 + offset) % len(FAMILY_PARAMS)]
        out.append(devices.scramble(ga, gb, pa, pb, seed=1000 + k + offset))
    return out


@pytest.fixture
def ideal_device():
    return devices.embed_ideal()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scrambled42():
    return devices.scramble(3, 2, 2, 1, seed=42)
