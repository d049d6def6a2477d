import numpy as np
import pytest

from src.config import PopulationSpec
from src.economics import rate_cache
from src.schemas import SecondaryUser, SystemParams
from src.simkit import draw_users


@pytest.fixture(autouse=True)
def fresh_rate_cache():
    rate_cache.clear()
    yield
    rate_cache.clear()


@pytest.fixture
def params() -> SystemParams:
    return SystemParams()


@pytest.fixture
def geom(params):
    return params.geometry()


@pytest.fixture
def make_users():
    def make(gains, buffer_bits=1000, pay_rate=0.1, earn_rate=10.0, first_id=0):
        buffers = buffer_bits if isinstance(buffer_bits, list) else [buffer_bits] * len(gains)
        return [
            SecondaryUser(
                id=first_id + i,
                gain_to_fc=gain,
                buffer_bits=buffer,
                pay_rate=pay_rate,
                earn_rate=earn_rate,
            )
            for i, (gain, buffer) in enumerate(zip(gains, buffers))
        ]

    return make


@pytest.fixture
def random_users():
    """Identical-cost population with exponential gains, seeded."""

    def draw(seed, count=5, buffer_bits=1000):
        population = PopulationSpec(count=count, buffer_bits=buffer_bits)
        return draw_users(population, np.random.default_rng(seed))

    return draw
