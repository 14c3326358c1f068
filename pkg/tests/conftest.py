import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from timedelay.localisation import make_profile
from timedelay.models import (FriedrichsModel, GaussianBarrier, GaussianCoupling, Grid,
                              SchrodingerModel, SquareBarrier)
from timedelay.spectral import make_packet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# ---- small systems for unit tests ----------------------------------------

@pytest.fixture(scope="session")
def small_grid():
    return Grid(4096, 1024.0)


@pytest.fixture(scope="session")
def free_model(small_grid):
    return SchrodingerModel(small_grid)


@pytest.fixture(scope="session")
def gauss_model(small_grid):
    return SchrodingerModel(small_grid, GaussianBarrier(2.0, 1.0))


@pytest.fixture(scope="session")
def square_model(small_grid):
    return SchrodingerModel(small_grid, SquareBarrier(2.0, 1.0))


@pytest.fixture(scope="session")
def coupled_model():
    return SchrodingerModel(Grid(4096, 1024.0), GaussianCoupling(0.5, 1.0),
                            masses=(1.0, 2.0), thresholds=(0.0, 1.0), variant="B")


@pytest.fixture(scope="session")
def friedrichs_model():
    return FriedrichsModel(Grid(4096, 2.5), 0.0, np.sqrt(0.15 / (2 * np.pi)), 0.55)


@pytest.fixture(scope="session")
def packet(gauss_model):
    return make_packet(gauss_model, 4.0, 0.5, [1.0, 0.0])


@pytest.fixture(scope="session")
def profile():
    return make_profile(1.0, 2.0)
