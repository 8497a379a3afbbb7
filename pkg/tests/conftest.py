import numpy as np
import pytest

from spatialtomo.modes import ModeBasis, PixelGrid, sample_basis
from spatialtomo.measurement import pixel_povm


@pytest.fixture(scope="session")
def desk_grid():
    return PixelGrid.square(128, 12.0)


@pytest.fixture(scope="session")
def small_grid():
    return PixelGrid.square(64, 12.0)


@pytest.fixture(scope="session")
def hg_sampled(desk_grid):
    cache = {}

    def get(order, waist=1.0, center=(0.0, 0.0)):
        key = (order, waist, tuple(center))
        if key not in cache:
            cache[key] = sample_basis(ModeBasis.hg_fixed_order(order, waist, center), desk_grid)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def direct_povm(hg_sampled):
    cache = {}

    def get(order):
        if order not in cache:
            cache[order] = pixel_povm(hg_sampled(order), drop_dark=True)
        return cache[order]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
