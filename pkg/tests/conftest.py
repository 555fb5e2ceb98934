import math

import numpy as np
import pytest
from hypothesis import settings

import homwell as hw
from homwell.experiment import ScalingSchedule, run_schedule
from homwell.minimize import SolverOptions

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def quartic_1d():
    """Quartic well, wells -1/1, no heterogeneity, 1d space."""
    return hw.make_potential("quartic_scalar", modulation="constant", dim_x=1)


@pytest.fixture(scope="session")
def hp_quartic(quartic_1d):
    return hw.homogenized(hw.truncate(quartic_1d))


@pytest.fixture(scope="session")
def checkerboard_2d():
    return hw.make_potential("quartic_scalar", modulation="checkerboard",
                             modulation_params={"values": [1.0, 2.0]}, dim_x=2)


@pytest.fixture(scope="session")
def kh_string_quartic(hp_quartic):
    # node count pinned to the reference resolution used throughout
    return hw.minimize_KH(hp_quartic, node_count=128)


@pytest.fixture(scope="session")
def kh_reference(kh_string_quartic):
    """Transition constant for the 1/2 checkerboard via scale equivariance."""
    return math.sqrt(1.5) * kh_string_quartic.kh


@pytest.fixture(scope="session")
def acceptance_schedule():
    return ScalingSchedule(eps0=0.23, delta0=0.2, rho=0.5, alpha=0.5, n_max=5)


@pytest.fixture(scope="session")
def schedule_rows(checkerboard_2d, acceptance_schedule, kh_reference):
    return run_schedule(checkerboard_2d, acceptance_schedule, kh=kh_reference,
                        options=SolverOptions(tol=1e-9))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
