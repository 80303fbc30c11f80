import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dyndet.dynamics import TorusBranchSystem, coupled_model, linear_model, perturbed_model
from dyndet.orbits import build_orbit_table

settings.register_profile("dyndet", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dyndet")


@pytest.fixture(scope="session")
def linear_system():
    return TorusBranchSystem(linear_model())


@pytest.fixture(scope="session")
def perturbed_system():
    return TorusBranchSystem(perturbed_model())


@pytest.fixture(scope="session")
def coupled_system():
    return TorusBranchSystem(coupled_model())


@pytest.fixture(scope="session")
def linear_table(linear_system):
    return build_orbit_table(linear_system, 8)


@pytest.fixture(scope="session")
def perturbed_table(perturbed_system):
    return build_orbit_table(perturbed_system, 8)


@pytest.fixture(scope="session")
def coupled_table(coupled_system):
    return build_orbit_table(coupled_system, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
