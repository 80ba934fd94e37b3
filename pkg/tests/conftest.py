import os

import pytest
from hypothesis import HealthCheck, settings

from subcrit_cp.groups import FreeProductGroup, ZdGroup
from subcrit_cp.kernel import kernel_from_spec, zero_kernel
from subcrit_cp.quotient import build_generator, enumerate_states
from subcrit_cp.spectral import solve_spectrum

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def Z():
    return ZdGroup(1)


@pytest.fixture(scope="session")
def nn(Z):
    """Nearest-neighbour kernel on Z with unit rates."""
    return kernel_from_spec(Z, {1: 1.0, -1: 1.0})


@pytest.fixture(scope="session")
def zero(Z):
    return zero_kernel(Z)


@pytest.fixture(scope="session")
def tree():
    """Free product of three copies of Z_2 (the 3-regular tree)."""
    return FreeProductGroup((2, 2, 2))


@pytest.fixture(scope="session")
def space_1014(nn):
    return enumerate_states(nn, (10, 14))


@pytest.fixture(scope="session")
def spec_1014(space_1014):
    """Spectral data of the nearest-neighbour chain at delta=1.5, caps (10,14)."""
    return solve_spectrum(build_generator(space_1014, 1.5))


@pytest.fixture(scope="session")
def two_state(nn):
    space = enumerate_states(nn, (2, 1))
    return build_generator(space, 1.0)
