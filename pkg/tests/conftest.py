import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from dsk.grid import GridSet

settings.register_profile("dsk", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dsk")


@st.composite
def gridsets(draw, dims=(1, 2, 3), max_m=5, max_size=24, min_size=1):
    d = draw(st.sampled_from(dims))
    m = draw(st.integers(1, max_m))
    n = 1 << m
    coord = st.tuples(*[st.integers(0, n - 1)] * d)
    pts = draw(st.lists(coord, min_size=min_size, max_size=max_size))
    return GridSet(d, m, pts)


def random_set(rng, d, m, size):
    total = (1 << m) ** d
    idx = rng.choice(total, size=min(size, total), replace=False)
    pts = np.stack(np.unravel_index(idx, ((1 << m),) * d), axis=1)
    return GridSet(d, m, pts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
